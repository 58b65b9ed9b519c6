//! Results tables across runs, the alignment/robustness correlation table
//! and SVG renderings of robustness curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::alignment::read_alignment_csv;
use crate::array::{mean, std_dev};
use crate::attacks::{read_curve_csv, RobustnessCurve};
use crate::data::read_manifest;
use crate::error::{Error, Result};
use crate::experiment::{eps50_or_nan, ALIGNMENT_FILE, CURVE_L2_FILE, CURVE_LINF_FILE, CURVE_SQUARE_FILE, RUN_MANIFEST};
use crate::table::{fmt_num, parse_num, write_csv};
use crate::theory::pearson;

/// Number of numeric metric columns in a [`ResultsRow`].
pub const METRIC_COUNT: usize = 8;

pub const RESULTS_HEADER: [&str; 12] = [
    "setup",
    "dataset",
    "seed",
    "eps_train",
    "clean_accuracy",
    "eps50_pgd_linf",
    "eps50_pgd_l2",
    "eps50_square_linf",
    "alpha_dx_mean",
    "alpha_dx_std",
    "alpha_x_mean",
    "alpha_x_std",
];

/// One trained model's summary. Missing optional curves show as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub setup: String,
    pub dataset: String,
    pub seed: u64,
    pub eps_train: f64,
    pub clean_accuracy: f64,
    pub eps50_pgd_linf: f64,
    pub eps50_pgd_l2: f64,
    pub eps50_square_linf: f64,
    pub alpha_dx_mean: f64,
    pub alpha_dx_std: f64,
    pub alpha_x_mean: f64,
    pub alpha_x_std: f64,
}

impl ResultsRow {
    pub fn metrics(&self) -> [f64; METRIC_COUNT] {
        [
            self.clean_accuracy,
            self.eps50_pgd_linf,
            self.eps50_pgd_l2,
            self.eps50_square_linf,
            self.alpha_dx_mean,
            self.alpha_dx_std,
            self.alpha_x_mean,
            self.alpha_x_std,
        ]
    }
}

/// Mean and standard deviation of each metric over the seeds of a setup.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub setup: String,
    pub dataset: String,
    pub eps_train: f64,
    pub runs: usize,
    pub mean: [f64; METRIC_COUNT],
    pub std: [f64; METRIC_COUNT],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
    pub aggregates: Vec<AggregateRow>,
    pub warnings: Vec<String>,
}

/// Subdirectories of `root` holding a run manifest, in name order.
pub fn find_run_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && path.join(RUN_MANIFEST).exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn optional_eps50(dir: &Path, file: &str) -> Result<f64> {
    let path = dir.join(file);
    if !path.exists() {
        return Ok(f64::NAN);
    }
    Ok(eps50_or_nan(&read_curve_csv(path, file)?))
}

fn read_run(dir: &Path) -> std::result::Result<ResultsRow, String> {
    let missing = |file: &str| format!("{}: missing {file}, row skipped", dir.display());
    for file in [RUN_MANIFEST, ALIGNMENT_FILE, CURVE_LINF_FILE] {
        if !dir.join(file).exists() {
            return Err(missing(file));
        }
    }
    let fail = |e: Error| format!("{}: {e}, row skipped", dir.display());
    let manifest = read_manifest(dir.join(RUN_MANIFEST)).map_err(fail)?;
    let field = |key: &str| manifest.get(key).cloned().ok_or_else(|| format!("{}: manifest lacks {key}, row skipped", dir.display()));
    let seed = field("seed")?.parse().map_err(|_| format!("{}: bad seed, row skipped", dir.display()))?;
    let eps_train = parse_num(&field("eps_train")?).map_err(fail)?;
    let linf = read_curve_csv(dir.join(CURVE_LINF_FILE), CURVE_LINF_FILE).map_err(fail)?;
    let align = read_alignment_csv(dir.join(ALIGNMENT_FILE)).map_err(fail)?;
    Ok(ResultsRow {
        setup: field("setup")?,
        dataset: field("dataset")?,
        seed,
        eps_train,
        clean_accuracy: linf.points.first().map_or(f64::NAN, |p| p.1),
        eps50_pgd_linf: eps50_or_nan(&linf),
        eps50_pgd_l2: optional_eps50(dir, CURVE_L2_FILE).map_err(fail)?,
        eps50_square_linf: optional_eps50(dir, CURVE_SQUARE_FILE).map_err(fail)?,
        alpha_dx_mean: align.alpha_dx_mean,
        alpha_dx_std: align.alpha_dx_std,
        alpha_x_mean: align.alpha_x_mean,
        alpha_x_std: align.alpha_x_std,
    })
}

fn finite_mean_std(values: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    match finite.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (finite[0], f64::NAN),
        _ => (mean(&finite), std_dev(&finite)),
    }
}

/// Aggregate rows grouped by setup, dataset and training budget. NaN
/// entries are left out of each column's statistics.
pub fn aggregate(rows: &[ResultsRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.setup.clone(), r.dataset.clone(), fmt_num(r.eps_train))).or_default().push(r);
    }
    groups
        .into_values()
        .map(|group| {
            let mut out = AggregateRow {
                setup: group[0].setup.clone(),
                dataset: group[0].dataset.clone(),
                eps_train: group[0].eps_train,
                runs: group.len(),
                mean: [f64::NAN; METRIC_COUNT],
                std: [f64::NAN; METRIC_COUNT],
            };
            for k in 0..METRIC_COUNT {
                let column: Vec<f64> = group.iter().map(|r| r.metrics()[k]).collect();
                (out.mean[k], out.std[k]) = finite_mean_std(&column);
            }
            out
        })
        .collect()
}

/// One row per run plus per-setup aggregates, ordered by setup, dataset
/// and seed. Runs with missing artifacts are skipped with a warning.
pub fn build_results_table(run_dirs: &[PathBuf]) -> ResultsTable {
    let mut table = ResultsTable::default();
    if run_dirs.is_empty() {
        table.warnings.push("no runs found".into());
    }
    for dir in run_dirs {
        match read_run(dir) {
            Ok(row) => table.rows.push(row),
            Err(w) => table.warnings.push(w),
        }
    }
    table.rows.sort_by(|a, b| (&a.setup, &a.dataset, a.seed).cmp(&(&b.setup, &b.dataset, b.seed)));
    table.aggregates = aggregate(&table.rows);
    table
}

/// Run rows, then a `mean` and a `std` row per aggregate group in the
/// seed column.
pub fn write_results_csv(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    let mut lines: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut line = vec![r.setup.clone(), r.dataset.clone(), r.seed.to_string(), fmt_num(r.eps_train)];
            line.extend(r.metrics().iter().map(|v| fmt_num(*v)));
            line
        })
        .collect();
    for a in &table.aggregates {
        for (label, values) in [("mean", &a.mean), ("std", &a.std)] {
            let mut line = vec![a.setup.clone(), a.dataset.clone(), label.to_string(), fmt_num(a.eps_train)];
            line.extend(values.iter().map(|v| fmt_num(*v)));
            lines.push(line);
        }
    }
    write_csv(path, &RESULTS_HEADER, lines)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub dataset: String,
    pub metric: String,
    pub pearson_r: f64,
    pub runs: usize,
    pub eps_groups: usize,
}

pub const CORRELATION_HEADER: [&str; 5] = ["dataset", "metric", "pearson_r", "runs", "eps_groups"];

/// Pearson r of each alignment metric against the PGD L-inf eps50, per
/// dataset, over runs trained with at least two distinct budgets.
pub fn correlation_report(rows: &[ResultsRow]) -> Result<Vec<CorrelationRow>> {
    let mut by_dataset: BTreeMap<&str, Vec<&ResultsRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.eps50_pgd_linf.is_finite()) {
        by_dataset.entry(&r.dataset).or_default().push(r);
    }
    let mut out = Vec::new();
    for (dataset, runs) in by_dataset {
        let mut budgets: Vec<String> = runs.iter().map(|r| fmt_num(r.eps_train)).collect();
        budgets.sort();
        budgets.dedup();
        if budgets.len() < 2 {
            continue;
        }
        let eps50: Vec<f64> = runs.iter().map(|r| r.eps50_pgd_linf).collect();
        for (metric, values) in [
            ("alpha_dx", runs.iter().map(|r| r.alpha_dx_mean).collect::<Vec<_>>()),
            ("alpha_x", runs.iter().map(|r| r.alpha_x_mean).collect()),
        ] {
            out.push(CorrelationRow {
                dataset: dataset.to_string(),
                metric: metric.into(),
                pearson_r: pearson(&values, &eps50).unwrap_or(f64::NAN),
                runs: runs.len(),
                eps_groups: budgets.len(),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("correlation needs runs from at least two training budgets".into()));
    }
    Ok(out)
}

pub fn write_correlation_csv(rows: &[CorrelationRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path,
        &CORRELATION_HEADER,
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.metric.clone(),
                fmt_num(r.pearson_r),
                r.runs.to_string(),
                r.eps_groups.to_string(),
            ]
        }),
    )
}

const SVG_WIDTH: f64 = 480.0;
const SVG_HEIGHT: f64 = 320.0;
const MARGIN: f64 = 50.0;
const TICKS: usize = 5;

/// Accuracy against budget as a single polyline with labeled axes.
pub fn render_curve_svg(curve: &RobustnessCurve) -> Result<String> {
    if curve.points.is_empty() {
        return Err(Error::InsufficientData("cannot draw an empty curve".into()));
    }
    if curve.points.iter().any(|(e, a)| !e.is_finite() || !a.is_finite()) {
        return Err(Error::NonFinite("curve points".into()));
    }
    let x_max = curve.points.iter().map(|p| p.0).fold(0.0, f64::max);
    let x_max = if x_max > 0.0 { x_max } else { 1.0 };
    let (plot_w, plot_h) = (SVG_WIDTH - 2.0 * MARGIN, SVG_HEIGHT - 2.0 * MARGIN);
    let px = |e: f64| MARGIN + plot_w * e / x_max;
    let py = |a: f64| SVG_HEIGHT - MARGIN - plot_h * a;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (px(0.0), py(0.0), px(x_max), py(1.0));
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let (tx, ty) = (px(f * x_max), py(f));
        let _ = writeln!(s, r#"<line x1="{tx:.2}" y1="{y0:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{tx:.2}" y="{:.2}" font-size="10" text-anchor="middle">{:.4}</text>"#,
            y0 + 18.0,
            f * x_max
        );
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{ty:.2}" x2="{x0:.2}" y2="{ty:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{f:.1}</text>"#,
            x0 - 8.0,
            ty + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">epsilon ({})</text>"#,
        MARGIN + plot_w / 2.0,
        SVG_HEIGHT - 10.0,
        curve.attack
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">accuracy</text>"#,
        MARGIN + plot_h / 2.0,
        MARGIN + plot_h / 2.0
    );
    let coords: Vec<String> = curve.points.iter().map(|&(e, a)| format!("{:.2},{:.2}", px(e), py(a))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, coords.join(" "));
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_curve_svg(curve: &RobustnessCurve, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_curve_svg(curve)?)?;
    Ok(())
}

/// Everything `report` writes, under `<root>/report/`. Run directories are
/// only read.
pub fn write_report(root: impl AsRef<Path>) -> Result<ResultsTable> {
    let root = root.as_ref();
    let runs = find_run_dirs(root)?;
    let mut table = build_results_table(&runs);
    let dir = root.join("report");
    fs::create_dir_all(&dir)?;
    write_results_csv(&table, dir.join("results.csv"))?;
    match correlation_report(&table.rows) {
        Ok(rows) => write_correlation_csv(&rows, dir.join("correlation.csv"))?,
        Err(e) => table.warnings.push(format!("correlation skipped: {e}")),
    }
    for run in &runs {
        let name = run.file_name().and_then(|n| n.to_str()).unwrap_or("run");
        for file in [CURVE_LINF_FILE, CURVE_L2_FILE, CURVE_SQUARE_FILE] {
            let path = run.join(file);
            if path.exists() {
                let stem = file.trim_end_matches(".csv");
                let curve = read_curve_csv(&path, stem)?;
                emit_curve_svg(&curve, dir.join(format!("{name}_{stem}.svg")))?;
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(setup: &str, seed: u64, eps_train: f64, eps50: f64, alpha: f64) -> ResultsRow {
        ResultsRow {
            setup: setup.into(),
            dataset: "spheres".into(),
            seed,
            eps_train,
            clean_accuracy: 1.0,
            eps50_pgd_linf: eps50,
            eps50_pgd_l2: f64::NAN,
            eps50_square_linf: f64::NAN,
            alpha_dx_mean: alpha,
            alpha_dx_std: 0.0,
            alpha_x_mean: alpha,
            alpha_x_std: 0.0,
        }
    }

    #[test]
    fn aggregate_matches_hand_values() {
        let rows: Vec<ResultsRow> = [0.1, 0.2, 0.3, 0.4, 0.5].iter().enumerate().map(|(i, &a)| row("pgd", i as u64, 0.005, a, a)).collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].runs, 5);
        assert!((agg[0].mean[1] - 0.3).abs() < 1e-15);
        // Sample standard deviation of 0.1..0.5.
        assert!((agg[0].std[1] - 0.15811388300841897).abs() < 1e-15);
        assert!(agg[0].mean[2].is_nan());
    }

    #[test]
    fn correlation_of_linear_rows() {
        let rows: Vec<ResultsRow> = (0..6).map(|i| row("pgd", i, 0.001 * (1 + i % 3) as f64, 0.01 * i as f64, 0.5 + 0.02 * i as f64)).collect();
        let r = correlation_report(&rows).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].pearson_r - 1.0).abs() < 1e-12);
        assert_eq!(r[0].eps_groups, 3);
        let single: Vec<ResultsRow> = (0..3).map(|i| row("pgd", i, 0.005, i as f64, i as f64)).collect();
        assert!(matches!(correlation_report(&single), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn svg_has_one_polyline_and_is_stable() {
        let curve = RobustnessCurve {
            points: vec![(0.0, 1.0), (0.5, 0.25)],
            attack: "pgd-linf".into(),
        };
        let a = render_curve_svg(&curve).unwrap();
        assert_eq!(a.matches("<polyline").count(), 1);
        let points = a.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 2);
        assert_eq!(a, render_curve_svg(&curve).unwrap());
        let empty = RobustnessCurve {
            points: vec![],
            attack: "x".into(),
        };
        assert!(render_curve_svg(&empty).is_err());
    }

    #[test]
    fn empty_directory_gives_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let table = write_report(dir.path()).unwrap();
        assert!(table.rows.is_empty());
        assert!(!table.warnings.is_empty());
    }
}
