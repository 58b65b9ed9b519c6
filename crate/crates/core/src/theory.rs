//! Numerical checks of the robustness/alignment identities on models where
//! they hold exactly, attack-based robustness by bisection, and Pearson
//! correlation.

use std::path::Path;

use ndarray::ArrayView2;

use crate::alignment::{cosine_sim, evaluate_alignment, lemma1_robustness};
use crate::array::{argmax, mean, median, norm2, sub};
use crate::attacks::{pgd_rows, AttackConfig, Norm};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{LinearModel, Model};
use crate::pool;
use crate::rng::Rng;
use crate::table::{fmt_num, read_numeric_csv, write_csv};

/// Signed distance from `x` to the hyperplane where `logit_a = logit_b`,
/// positive on the side of `a`.
fn hyperplane_distance(model: &LinearModel, x: &[f64], a: usize, b: usize) -> f64 {
    let l = model.logits(x);
    let w = sub(&model.column(a), &model.column(b));
    (l[a] - l[b]) / norm2(&w)
}

/// `(m(x), c*(x))` for a linear model: the prediction and the other class
/// whose hyperplane is closest.
pub fn prediction_and_closest(model: &LinearModel, x: &[f64]) -> (usize, usize) {
    let m = argmax(&model.logits(x));
    let c = (0..model.class_count())
        .filter(|&c| c != m)
        .map(|c| (c, hyperplane_distance(model, x, m, c)))
        .fold((usize::MAX, f64::INFINITY), |best, (c, d)| if d < best.1 { (c, d) } else { best });
    (m, c.0)
}

fn in_scope(model: &LinearModel, x: &[f64], i: usize, j: usize) -> bool {
    let (m, c) = prediction_and_closest(model, x);
    (m == i && c == j) || (m == j && c == i)
}

/// `|rho(x_i) + rho(x_j) - |x_j - x_i| alpha|` for a pair of classes `i`, `j`
/// around which the prediction and closest other class are `{i, j}`.
pub fn verify_theorem1(model: &LinearModel, x_i: &[f64], x_j: &[f64], i: usize, j: usize) -> Result<f64> {
    let (n, classes) = (model.input_dim(), model.class_count());
    if x_i.len() != n || x_j.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            got: vec![x_i.len(), x_j.len()],
        });
    }
    if i == j || i >= classes || j >= classes {
        return Err(Error::InvalidArgument(format!("classes {i}, {j} must be distinct and below {classes}")));
    }
    for (name, x) in [("x_i", x_i), ("x_j", x_j)] {
        if !in_scope(model, x, i, j) {
            let (m, c) = prediction_and_closest(model, x);
            return Err(Error::OutOfScope(format!("{name} has prediction {m} and closest class {c}, not {{{i}, {j}}}")));
        }
    }
    let rho_i = hyperplane_distance(model, x_i, i, j);
    let rho_j = hyperplane_distance(model, x_j, j, i);
    let mut coeffs = vec![0.0; classes];
    coeffs[j] = 1.0;
    coeffs[i] = -1.0;
    let gap = model.input_gradient(x_i, &coeffs);
    let delta = sub(x_j, x_i);
    let alpha = cosine_sim(&delta, &gap);
    Ok((rho_i + rho_j - norm2(&delta) * alpha).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Sweep {
    pub trials: usize,
    /// Pair draws rejected because they were out of scope.
    pub filtered: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
    /// `max_residual` divided by `1 + |rho_i| + |rho_j|` of its pair.
    pub max_relative_residual: f64,
}

impl Theorem1Sweep {
    /// Fraction of all pair draws that were rejected.
    pub fn filtered_fraction(&self) -> f64 {
        self.filtered as f64 / (self.filtered + self.trials).max(1) as f64
    }
}

/// One random Gaussian model per trial. `x_i` is drawn first and fixes the
/// class pair; `x_j` is redrawn until it is in scope for the same pair.
pub fn theorem1_sweep(trials: usize, n: usize, classes: usize, seed: u64) -> Result<Theorem1Sweep> {
    const MAX_REDRAWS: usize = 1000;
    if classes < 2 || n == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and at least two classes".into()));
    }
    let results = pool::map_chunks(trials, 64, |range| {
        range
            .map(|t| -> Result<(f64, f64, usize)> {
                let mut rng = Rng::child(seed, t as u64);
                let columns: Vec<Vec<f64>> = (0..classes).map(|_| rng.gaussian_vec(n)).collect();
                let model = LinearModel::from_columns(&columns, rng.gaussian_vec(classes))?;
                let x_i = rng.gaussian_vec(n);
                let (m, c) = prediction_and_closest(&model, &x_i);
                let (i, j) = if rng.below(2) == 0 { (m, c) } else { (c, m) };
                for redraw in 0..MAX_REDRAWS {
                    let x_j = rng.gaussian_vec(n);
                    if !in_scope(&model, &x_j, i, j) {
                        continue;
                    }
                    let r = verify_theorem1(&model, &x_i, &x_j, i, j)?;
                    let scale = 1.0 + hyperplane_distance(&model, &x_i, i, j).abs() + hyperplane_distance(&model, &x_j, j, i).abs();
                    return Ok((r, r / scale, redraw));
                }
                Err(Error::InsufficientData(format!("no in-scope partner found for trial {t}")))
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut residuals = Vec::with_capacity(trials);
    let mut sweep = Theorem1Sweep {
        trials,
        filtered: 0,
        max_residual: 0.0,
        mean_residual: 0.0,
        max_relative_residual: 0.0,
    };
    for chunk in results {
        for (r, rel, redraws) in chunk? {
            residuals.push(r);
            sweep.filtered += redraws;
            sweep.max_residual = sweep.max_residual.max(r);
            sweep.max_relative_residual = sweep.max_relative_residual.max(rel);
        }
    }
    sweep.mean_residual = if residuals.is_empty() { 0.0 } else { mean(&residuals) };
    Ok(sweep)
}

pub const SWEEP_HEADER: [&str; 3] = ["trials", "max_residual", "mean_residual"];

pub fn write_sweep_csv(sweep: &Theorem1Sweep, path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path,
        &SWEEP_HEADER,
        [vec![sweep.trials.to_string(), fmt_num(sweep.max_residual), fmt_num(sweep.mean_residual)]],
    )
}

/// Settings for per-sample attack robustness.
#[derive(Debug, Clone, PartialEq)]
pub struct BisectionConfig {
    pub norm: Norm,
    pub iterations: usize,
    pub pgd_steps: usize,
    /// First budget tried when bracketing.
    pub start: f64,
    /// Doublings allowed before giving up.
    pub max_doublings: usize,
    pub clamp: Option<(f64, f64)>,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            norm: Norm::Two,
            iterations: 12,
            pgd_steps: AttackConfig::DEFAULT_ITERATIONS,
            start: 1.0,
            max_doublings: 16,
            clamp: None,
        }
    }
}

impl BisectionConfig {
    fn attack(&self, epsilon: f64, n: usize) -> AttackConfig {
        // A total path of 2.5 epsilon, whatever the norm.
        let per_step = 2.5 * epsilon / self.pgd_steps as f64;
        let step = match self.norm {
            Norm::Inf => per_step,
            Norm::Two => per_step / (n as f64).sqrt(),
        };
        AttackConfig {
            norm: self.norm,
            epsilon,
            step,
            iterations: self.pgd_steps,
            random_start: false,
            clamp: self.clamp,
            seed: 0,
        }
    }
}

/// Smallest budget at which deterministic PGD changes whether `x` is
/// classified as `y`; negative for misclassified points, whose search
/// descends the loss instead.
pub fn attack_robustness(model: &dyn Model, x: &[f64], y: usize, cfg: &BisectionConfig) -> Result<f64> {
    if x.len() != model.input_dim() || y >= model.class_count() {
        return Err(Error::ShapeMismatch {
            expected: vec![model.input_dim()],
            got: vec![x.len()],
        });
    }
    if !(cfg.start > 0.0) || cfg.iterations == 0 {
        return Err(Error::InvalidArgument("bisection needs a positive start and iterations".into()));
    }
    let correct = model.predict(x) == y;
    let row = ArrayView2::from_shape((1, x.len()), x).expect("row");
    let changes = |epsilon: f64| {
        let adv = pgd_rows(model, row, &[y], &cfg.attack(epsilon, x.len()), &[0], correct);
        (model.predict(&adv.row(0).to_vec()) == y) != correct
    };
    let (mut lo, mut hi) = if changes(cfg.start) {
        let mut hi = cfg.start;
        // Halve toward zero until the change disappears.
        while hi > cfg.start * f64::EPSILON && changes(hi / 2.0) {
            hi /= 2.0;
        }
        (hi / 2.0, hi)
    } else {
        let mut lo = cfg.start;
        let mut doublings = 0;
        loop {
            if doublings == cfg.max_doublings {
                return Err(Error::AttackExhausted(lo));
            }
            doublings += 1;
            if changes(2.0 * lo) {
                break (lo, 2.0 * lo);
            }
            lo *= 2.0;
        }
    };
    for _ in 0..cfg.iterations {
        let mid = 0.5 * (lo + hi);
        if changes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    Ok(if correct { rho } else { -rho })
}

/// `(rho_lemma1, rho_attack)` for the first `sample_count` samples.
pub fn linearity_survey(model: &dyn Model, ds: &Dataset, sample_count: usize, cfg: &BisectionConfig) -> Result<Vec<(f64, f64)>> {
    let samples = &ds.samples[..sample_count.min(ds.len())];
    pool::map_chunks(samples.len(), 8, |range| {
        samples[range]
            .iter()
            .map(|s| Ok((lemma1_robustness(model, &s.x, s.y)?, attack_robustness(model, &s.x, s.y, cfg)?)))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<Vec<Vec<_>>>>()
    .map(|chunks| chunks.concat())
}

pub const SCATTER_HEADER: [&str; 2] = ["rho_lemma1", "rho_attack"];

pub fn write_scatter_csv(pairs: &[(f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    write_csv(path, &SCATTER_HEADER, pairs.iter().map(|&(a, b)| vec![fmt_num(a), fmt_num(b)]))
}

pub fn read_scatter_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    Ok(read_numeric_csv(path, &SCATTER_HEADER)?.into_iter().map(|r| (r[0], r[1])).collect())
}

/// Largest `|rho_lemma1 - rho_attack|` over the scatter.
pub fn max_identity_gap(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Mean of `|rho_lemma1 - rho_attack| / |rho_attack|`, skipping zero
/// attack distances.
pub fn mean_relative_gap(pairs: &[(f64, f64)]) -> f64 {
    let gaps: Vec<f64> = pairs.iter().filter(|(_, b)| *b != 0.0).map(|(a, b)| (a - b).abs() / b.abs()).collect();
    mean(&gaps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpheresEquality {
    /// Median attack-based robustness; infinite for a degenerate model.
    pub rho_median: f64,
    pub alpha_dx: f64,
    /// `rho_median / alpha_dx`, absent for a degenerate model.
    pub ratio: Option<f64>,
    /// Set when every logit-gap gradient vanishes.
    pub degenerate: bool,
}

/// Median attack robustness over the dataset against mean alignment.
pub fn verify_spheres_equality(model: &dyn Model, ds: &Dataset, cfg: &BisectionConfig) -> Result<SpheresEquality> {
    if ds.n != model.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![model.input_dim()],
            got: vec![ds.n],
        });
    }
    let degenerate = SpheresEquality {
        rho_median: f64::INFINITY,
        alpha_dx: 0.0,
        ratio: None,
        degenerate: true,
    };
    let report = match evaluate_alignment(model, ds) {
        Err(Error::Degenerate(_)) => return Ok(degenerate),
        other => other?,
    };
    if report.records.iter().all(|r| r.alpha_dx == 0.0) {
        return Ok(degenerate);
    }
    let rhos = pool::map_chunks(ds.len(), 8, |range| {
        ds.samples[range]
            .iter()
            .map(|s| attack_robustness(model, &s.x, s.y, cfg))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<Vec<Vec<_>>>>()?
    .concat();
    let rho_median = median(&rhos);
    Ok(SpheresEquality {
        rho_median,
        alpha_dx: report.alpha_dx_mean,
        ratio: Some(rho_median / report.alpha_dx_mean),
        degenerate: false,
    })
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![xs.len()],
            got: vec![ys.len()],
        });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData("pearson needs at least two points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
