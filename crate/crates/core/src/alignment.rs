//! Gradient alignment: the closest other class, the logit-gap gradient,
//! its cosine with the residual, the baseline metric and the linearized
//! robustness estimate.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::array::{argmax, dot, mean, norm2, std_dev};
use crate::data::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pool;
use crate::table::{fmt_num, read_csv, write_csv};

const NORM_FLOOR: f64 = 1e-12;

/// `<u, v> / (|u| |v| + 1e-12)`, or 0 when either norm is below 1e-12.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (norm2(u), norm2(v));
    if nu < NORM_FLOOR || nv < NORM_FLOOR {
        return 0.0;
    }
    dot(u, v) / (nu * nv + NORM_FLOOR)
}

fn pair_coeffs(classes: usize, plus: usize, minus: usize) -> Vec<f64> {
    let mut c = vec![0.0; classes];
    c[plus] += 1.0;
    c[minus] -= 1.0;
    c
}

/// Linearized distance to the boundary between `y` and each other class;
/// `None` where the gradient difference vanishes.
fn boundary_distances(logits: &[f64], grads: &[Vec<f64>], y: usize) -> Vec<Option<f64>> {
    (0..logits.len())
        .map(|c| {
            if c == y {
                return None;
            }
            let diff: f64 = grads[y].iter().zip(&grads[c]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            (diff >= NORM_FLOOR).then(|| (logits[y] - logits[c]).abs() / diff)
        })
        .collect()
}

fn closest(distances: &[Option<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (c, d) in distances.iter().enumerate() {
        if let Some(d) = *d {
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((c, d));
            }
        }
    }
    best
}

fn logit_gradients(model: &dyn Model, x: &[f64]) -> Vec<Vec<f64>> {
    let classes = model.class_count();
    (0..classes)
        .map(|c| {
            let mut e = vec![0.0; classes];
            e[c] = 1.0;
            model.input_gradient(x, &e)
        })
        .collect()
}

/// The other class whose linearized boundary is closest to `x`. For two
/// classes this is always the class that is not `y`.
pub fn tilde_c(model: &dyn Model, x: &[f64], y: usize) -> Result<usize> {
    if model.class_count() == 2 {
        return Ok(1 - y);
    }
    let d = boundary_distances(&model.logits(x), &logit_gradients(model, x), y);
    closest(&d)
        .map(|(c, _)| c)
        .ok_or_else(|| Error::Degenerate("all logit-gap gradients vanish".into()))
}

/// Gradient of `logit_{tilde_c} - logit_y`, with the class held fixed.
pub fn ell_gradient(model: &dyn Model, x: &[f64], y: usize) -> Result<Vec<f64>> {
    let c = tilde_c(model, x, y)?;
    Ok(model.input_gradient(x, &pair_coeffs(model.class_count(), c, y)))
}

pub fn alpha_delta_x(model: &dyn Model, sample: &LabeledSample) -> Result<f64> {
    let delta = sample.delta_x.as_ref().ok_or(Error::MissingDelta(0))?;
    Ok(cosine_sim(delta, &ell_gradient(model, &sample.x, sample.y)?))
}

/// `|cos(x, grad logit_{m(x)})|`.
pub fn alpha_x_baseline(model: &dyn Model, x: &[f64]) -> Result<f64> {
    if norm2(x) == 0.0 {
        return Err(Error::InvalidArgument("alpha_x of the zero vector".into()));
    }
    let m = model.predict(x);
    let mut e = vec![0.0; model.class_count()];
    e[m] = 1.0;
    Ok(cosine_sim(x, &model.input_gradient(x, &e)).abs())
}

/// Linearized distance to the nearest boundary, negative when `x` is
/// misclassified.
pub fn lemma1_robustness(model: &dyn Model, x: &[f64], y: usize) -> Result<f64> {
    let logits = model.logits(x);
    let d = boundary_distances(&logits, &logit_gradients(model, x), y);
    let (_, rho) = closest(&d).ok_or_else(|| Error::Degenerate("all logit-gap gradients vanish".into()))?;
    Ok(if argmax(&logits) == y { rho } else { -rho })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRecord {
    pub index: usize,
    pub y: usize,
    pub m_x: usize,
    pub tilde_c: usize,
    pub alpha_dx: f64,
    pub alpha_x: f64,
    pub rho_lemma1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub records: Vec<AlignmentRecord>,
    pub alpha_dx_mean: f64,
    pub alpha_dx_std: f64,
    pub alpha_x_mean: f64,
    pub alpha_x_std: f64,
}

impl AlignmentReport {
    pub fn from_records(records: Vec<AlignmentRecord>) -> Self {
        let adx: Vec<f64> = records.iter().map(|r| r.alpha_dx).collect();
        let ax: Vec<f64> = records.iter().map(|r| r.alpha_x).collect();
        Self {
            alpha_dx_mean: mean(&adx),
            alpha_dx_std: std_dev(&adx),
            alpha_x_mean: mean(&ax),
            alpha_x_std: std_dev(&ax),
            records,
        }
    }
}

fn one_hot_gradients(model: &dyn Model, xs: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<Array2<f64>>) {
    let classes = model.class_count();
    let mut logits = None;
    let grads = (0..classes)
        .map(|c| {
            let mut coeffs = Array2::zeros((xs.nrows(), classes));
            coeffs.column_mut(c).fill(1.0);
            let (l, g) = model.input_gradient_batch(xs, coeffs.view());
            logits.get_or_insert(l);
            g
        })
        .collect();
    (logits.expect("at least two classes"), grads)
}

/// Closest other class per row; `None` where every gradient gap vanishes.
pub(crate) fn tilde_c_rows(model: &dyn Model, xs: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<Option<usize>> {
    if model.class_count() == 2 {
        return labels.iter().map(|&y| Some(1 - y)).collect();
    }
    let (logits, grads) = one_hot_gradients(model, xs);
    labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            let g: Vec<Vec<f64>> = grads.iter().map(|gc| gc.row(b).to_vec()).collect();
            closest(&boundary_distances(&logits.row(b).to_vec(), &g, y)).map(|(c, _)| c)
        })
        .collect()
}

/// [`tilde_c`] for every row of a batch.
pub fn tilde_c_batch(model: &dyn Model, xs: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Vec<usize>> {
    tilde_c_rows(model, xs, labels)
        .into_iter()
        .enumerate()
        .map(|(b, c)| c.ok_or_else(|| Error::Degenerate(format!("row {b}: all logit-gap gradients vanish"))))
        .collect()
}

fn evaluate_chunk(model: &dyn Model, ds: &Dataset, range: std::ops::Range<usize>) -> Result<Vec<AlignmentRecord>> {
    let idx: Vec<usize> = range.collect();
    let batch = ds.batch(&idx);
    let (logits, grads) = one_hot_gradients(model, batch.xs.view());
    let mut out = Vec::with_capacity(idx.len());
    for (b, &i) in idx.iter().enumerate() {
        let s = &ds.samples[i];
        let delta = s.delta_x.as_ref().ok_or(Error::MissingDelta(i))?;
        let l = logits.row(b).to_vec();
        let g: Vec<Vec<f64>> = grads.iter().map(|gc| gc.row(b).to_vec()).collect();
        let y = s.y;
        let m = argmax(&l);
        let distances = boundary_distances(&l, &g, y);
        let (closest_c, rho) =
            closest(&distances).ok_or_else(|| Error::Degenerate(format!("sample {i}: all logit-gap gradients vanish")))?;
        let c = if l.len() == 2 { 1 - y } else { closest_c };
        let ell: Vec<f64> = g[c].iter().zip(&g[y]).map(|(a, b)| a - b).collect();
        if norm2(&s.x) == 0.0 {
            return Err(Error::InvalidArgument(format!("sample {i} is the zero vector")));
        }
        out.push(AlignmentRecord {
            index: i,
            y,
            m_x: m,
            tilde_c: c,
            alpha_dx: cosine_sim(delta, &ell),
            alpha_x: cosine_sim(&s.x, &g[m]).abs(),
            rho_lemma1: if m == y { rho } else { -rho },
        });
    }
    Ok(out)
}

/// Per-sample alignment records and their mean and standard deviation.
pub fn evaluate_alignment(model: &dyn Model, ds: &Dataset) -> Result<AlignmentReport> {
    if ds.n != model.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![model.input_dim()],
            got: vec![ds.n],
        });
    }
    let chunks = pool::map_chunks(ds.len(), 250, |r| evaluate_chunk(model, ds, r));
    let mut records = Vec::with_capacity(ds.len());
    for c in chunks {
        records.extend(c?);
    }
    Ok(AlignmentReport::from_records(records))
}

pub const ALIGNMENT_HEADER: [&str; 7] = ["index", "y", "m_x", "tilde_c", "alpha_dx", "alpha_x", "rho_lemma1"];

pub fn write_alignment_csv(report: &AlignmentReport, path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path,
        &ALIGNMENT_HEADER,
        report.records.iter().map(|r| {
            vec![
                r.index.to_string(),
                r.y.to_string(),
                r.m_x.to_string(),
                r.tilde_c.to_string(),
                fmt_num(r.alpha_dx),
                fmt_num(r.alpha_x),
                fmt_num(r.rho_lemma1),
            ]
        }),
    )
}

pub fn read_alignment_csv(path: impl AsRef<Path>) -> Result<AlignmentReport> {
    let (header, rows) = read_csv(path)?;
    if header != ALIGNMENT_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected alignment header {header:?}")));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("not an index: {s:?}")));
    let num = crate::table::parse_num;
    let records = rows
        .iter()
        .map(|r| {
            if r.len() != 7 {
                return Err(Error::InvalidArgument("alignment row needs 7 fields".into()));
            }
            Ok(AlignmentRecord {
                index: int(&r[0])?,
                y: int(&r[1])?,
                m_x: int(&r[2])?,
                tilde_c: int(&r[3])?,
                alpha_dx: num(&r[4])?,
                alpha_x: num(&r[5])?,
                rho_lemma1: num(&r[6])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignmentReport::from_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearModel, RadialSpheresModel};

    #[test]
    fn cosine_cases() {
        assert!((cosine_sim(&[2.0, 1.0], &[2.0, 1.0]) - 1.0).abs() < 1e-11);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert!((cosine_sim(&[1.0, 0.0], &[1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-11);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn radial_model_quantities() {
        let m = RadialSpheresModel::new(2);
        let x = [0.6, 0.8];
        let g = ell_gradient(&m, &x, 0).unwrap();
        assert!((g[0] - 1.2).abs() < 1e-15 && (g[1] - 1.6).abs() < 1e-15);
        assert!((lemma1_robustness(&m, &x, 0).unwrap() - 0.15).abs() < 1e-12);
        assert!((lemma1_robustness(&m, &x, 1).unwrap() + 0.15).abs() < 1e-12);
        assert!((alpha_x_baseline(&m, &x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hyperplane_distance() {
        let m = LinearModel::from_columns(&[vec![0.0, 0.0], vec![3.0, 4.0]], vec![0.0, 0.0]).unwrap();
        assert!((lemma1_robustness(&m, &[1.0, 1.0], 1).unwrap() - 1.4).abs() < 1e-12);
        assert_eq!(ell_gradient(&m, &[5.0, -1.0], 1).unwrap(), vec![-3.0, -4.0]);
    }

    #[test]
    fn tie_breaks_toward_smaller_index() {
        // Classes 1 and 2 share logits; class 2's larger gradient gap puts its boundary closer.
        let m = LinearModel::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0]], vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(tilde_c(&m, &[0.0, 0.0], 0).unwrap(), 2);
        // Identical logits and gradients: index order decides.
        let m = LinearModel::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]], vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(tilde_c(&m, &[0.0, 0.0], 0).unwrap(), 1);
    }

    #[test]
    fn batch_report_matches_single_sample_functions() {
        let ds = crate::data::sample_spheres(30, 6, 8).unwrap();
        let mlp = crate::mlp::Mlp::new(&[6, 10, 2], &mut crate::rng::Rng::new(3)).unwrap();
        let report = evaluate_alignment(&mlp, &ds).unwrap();
        for (r, s) in report.records.iter().zip(&ds.samples) {
            assert!((r.alpha_dx - alpha_delta_x(&mlp, s).unwrap()).abs() < 1e-12);
            assert!((r.alpha_x - alpha_x_baseline(&mlp, &s.x).unwrap()).abs() < 1e-12);
            assert!((r.rho_lemma1 - lemma1_robustness(&mlp, &s.x, s.y).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_delta() {
        let s = LabeledSample {
            x: vec![1.0, 0.0],
            y: 0,
            delta_x: None,
        };
        assert!(matches!(alpha_delta_x(&RadialSpheresModel::new(2), &s), Err(Error::MissingDelta(_))));
    }
}
