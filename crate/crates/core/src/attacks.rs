//! PGD (L-inf and L2), the Square Attack, robustness curves and eps50.

use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView2, ArrayViewMut1};

use crate::array::argmax;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mlp::softmax_rows;
use crate::model::Model;
use crate::pool;
use crate::rng::Rng;
use crate::table::{fmt_num, read_numeric_csv, write_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Inf,
    Two,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::Inf => "linf",
            Norm::Two => "l2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub norm: Norm,
    pub epsilon: f64,
    /// Base step. Under L2 the step actually taken is `step * sqrt(n)`.
    pub step: f64,
    pub iterations: usize,
    pub random_start: bool,
    pub clamp: Option<(f64, f64)>,
    pub seed: u64,
}

impl AttackConfig {
    pub const DEFAULT_ITERATIONS: usize = 40;

    pub fn pgd(norm: Norm, epsilon: f64, step: f64) -> Self {
        Self {
            norm,
            epsilon,
            step,
            iterations: Self::DEFAULT_ITERATIONS,
            random_start: true,
            clamp: None,
            seed: 0,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn deterministic(mut self) -> Self {
        self.random_start = false;
        self
    }

    pub fn step_size(&self, n: usize) -> f64 {
        match self.norm {
            Norm::Inf => self.step,
            Norm::Two => self.step * (n as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon {} must be finite and >= 0", self.epsilon)));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidArgument(format!("step {} must be positive", self.step)));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!("clamp range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

/// Cross-entropy gradient coefficients `softmax - onehot(y)` per row.
pub fn ce_coefficients(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Array2<f64> {
    let mut c = softmax_rows(logits);
    for (b, &y) in labels.iter().enumerate() {
        c[[b, y]] -= 1.0;
    }
    c
}

fn clamp_row(mut row: ArrayViewMut1<'_, f64>, clamp: Option<(f64, f64)>) {
    if let Some((lo, hi)) = clamp {
        row.mapv_inplace(|v| v.clamp(lo, hi));
    }
}

/// Project `adv` onto the ball of radius `eps` around `x` and then the box.
fn project(mut adv: ArrayViewMut1<'_, f64>, x: ndarray::ArrayView1<'_, f64>, cfg: &AttackConfig) {
    match cfg.norm {
        Norm::Inf => {
            for (a, &o) in adv.iter_mut().zip(x) {
                *a = a.clamp(o - cfg.epsilon, o + cfg.epsilon);
            }
        }
        Norm::Two => {
            let norm = adv.iter().zip(x).map(|(a, o)| (a - o) * (a - o)).sum::<f64>().sqrt();
            if norm > cfg.epsilon {
                let s = cfg.epsilon / norm;
                for (a, &o) in adv.iter_mut().zip(x) {
                    *a = o + (*a - o) * s;
                }
            }
        }
    }
    clamp_row(adv, cfg.clamp);
}

fn distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>, norm: Norm) -> f64 {
    let d = a.iter().zip(b).map(|(p, q)| p - q);
    match norm {
        Norm::Inf => d.fold(0.0, |m, v| m.max(v.abs())),
        Norm::Two => d.map(|v| v * v).sum::<f64>().sqrt(),
    }
}

fn random_start(rng: &mut Rng, n: usize, cfg: &AttackConfig) -> Vec<f64> {
    match cfg.norm {
        Norm::Inf => (0..n).map(|_| rng.uniform(-cfg.epsilon, cfg.epsilon)).collect(),
        Norm::Two => {
            let dir = rng.gaussian_vec(n);
            let norm = crate::array::norm2(&dir);
            let radius = cfg.epsilon * rng.next_f64().powf(1.0 / n as f64);
            dir.iter().map(|v| v * radius / norm.max(f64::MIN_POSITIVE)).collect()
        }
    }
}

/// PGD on a batch. `ids[b]` names row `b`'s random stream; `ascend` false
/// descends the loss instead (used to push misclassified points back).
pub(crate) fn pgd_rows(
    model: &dyn Model,
    xs: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &AttackConfig,
    ids: &[u64],
    ascend: bool,
) -> Array2<f64> {
    let mut adv = xs.to_owned();
    if cfg.epsilon == 0.0 || xs.nrows() == 0 {
        return adv;
    }
    let n = xs.ncols();
    let step = cfg.step_size(n);
    if cfg.random_start {
        for (b, mut row) in adv.rows_mut().into_iter().enumerate() {
            let delta = random_start(&mut Rng::child(cfg.seed, ids[b]), n, cfg);
            row.iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
            clamp_row(row, cfg.clamp);
        }
    }
    let coeffs_of = |logits: ArrayView2<'_, f64>| ce_coefficients(logits, labels);
    for _ in 0..cfg.iterations {
        let (_, grads) = model.input_gradient_with(adv.view(), &coeffs_of);
        for (b, mut row) in adv.rows_mut().into_iter().enumerate() {
            let g = grads.row(b);
            let dir = if ascend { 1.0 } else { -1.0 };
            match cfg.norm {
                Norm::Inf => {
                    for (a, &gv) in row.iter_mut().zip(g) {
                        if gv != 0.0 {
                            *a += dir * step * gv.signum();
                        }
                    }
                }
                Norm::Two => {
                    let gn = g.dot(&g).sqrt();
                    if gn > 0.0 {
                        row.scaled_add(dir * step / gn, &g);
                    }
                }
            }
            project(row.view_mut(), xs.row(b), cfg);
            debug_assert!(distance(row.view(), xs.row(b), cfg.norm) <= cfg.epsilon * (1.0 + 1e-12) + 1e-12);
        }
    }
    adv
}

/// Untargeted PGD maximizing cross-entropy. Uses random stream 0.
pub fn pgd_attack(model: &dyn Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<Vec<f64>> {
    Ok(pgd_attack_batch(model, ArrayView2::from_shape((1, x.len()), x).expect("row"), &[y], cfg, 0)?.into_raw_vec_and_offset().0)
}

/// PGD on a batch; row `b` uses random stream `first_index + b`.
pub fn pgd_attack_batch(
    model: &dyn Model,
    xs: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &AttackConfig,
    first_index: u64,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    check_batch(model, xs, labels)?;
    let ids: Vec<u64> = (0..xs.nrows() as u64).map(|b| first_index + b).collect();
    Ok(pgd_rows(model, xs, labels, cfg, &ids, true))
}

fn check_batch(model: &dyn Model, xs: ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    if xs.ncols() != model.input_dim() || xs.nrows() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![labels.len(), model.input_dim()],
            got: xs.shape().to_vec(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.class_count()) {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareConfig {
    pub queries: usize,
    /// Initial fraction of features changed per patch.
    pub p_init: f64,
    /// Image view `(height, width)`; inferred from the dimension if absent.
    pub shape: Option<(usize, usize)>,
}

impl Default for SquareConfig {
    fn default() -> Self {
        Self {
            queries: 5000,
            p_init: 0.8,
            shape: None,
        }
    }
}

/// Image view of an `n`-feature input: square images, or 20 x 25 for 500.
pub fn image_shape(n: usize) -> Result<(usize, usize)> {
    let s = (n as f64).sqrt().round() as usize;
    if s * s == n && s > 0 {
        return Ok((s, s));
    }
    if n == 500 {
        return Ok((20, 25));
    }
    Err(Error::InvalidArgument(format!("no image view for {n} features")))
}

/// Patch fraction at iteration `it` of `budget`; halves at the milestones
/// of a 10000-query run, rescaled.
pub fn square_p_schedule(p_init: f64, it: usize, budget: usize) -> f64 {
    let it = if budget == 0 { 0 } else { it * 10_000 / budget };
    let halvings = match it {
        0..=10 => 0,
        11..=50 => 1,
        51..=200 => 2,
        201..=500 => 3,
        501..=1000 => 4,
        1001..=2000 => 5,
        2001..=4000 => 6,
        4001..=6000 => 7,
        6001..=8000 => 8,
        _ => 9,
    };
    p_init / f64::from(1u32 << halvings)
}

/// `logit_y - max_{c != y} logit_c`; negative means misclassified.
pub fn margin(logits: &[f64], y: usize) -> f64 {
    let other = logits
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != y)
        .fold(f64::NEG_INFINITY, |m, (_, &v)| m.max(v));
    logits[y] - other
}

fn margins(model: &dyn Model, xs: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<f64> {
    let logits = model.logits_batch(xs);
    labels
        .iter()
        .enumerate()
        .map(|(b, &y)| margin(&logits.row(b).to_vec(), y))
        .collect()
}

fn square_rows(
    model: &dyn Model,
    xs: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &AttackConfig,
    sq: &SquareConfig,
    ids: &[u64],
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Array2<f64>> {
    let n = xs.ncols();
    let (h, w) = match sq.shape {
        Some((h, w)) if h * w == n => (h, w),
        Some((h, w)) => return Err(Error::InvalidArgument(format!("image view {h}x{w} does not hold {n} features"))),
        None => image_shape(n)?,
    };
    let mut best = xs.to_owned();
    if cfg.epsilon == 0.0 || xs.nrows() == 0 {
        return Ok(best);
    }
    let eps = cfg.epsilon;
    let mut rngs: Vec<Rng> = ids.iter().map(|&i| Rng::child(cfg.seed, i)).collect();

    let mut init = xs.to_owned();
    for (b, mut row) in init.rows_mut().into_iter().enumerate() {
        let signs: Vec<f64> = (0..w).map(|_| rngs[b].sign()).collect();
        for (k, v) in row.iter_mut().enumerate() {
            *v += eps * signs[k % w];
        }
        clamp_row(row, cfg.clamp);
    }
    let mut best_m = margins(model, xs, labels);
    let init_m = margins(model, init.view(), labels);
    for b in 0..xs.nrows() {
        if init_m[b] < best_m[b] {
            best.row_mut(b).assign(&init.row(b));
            best_m[b] = init_m[b];
        }
    }
    if let Some(t) = trace.as_deref_mut() {
        t.push(best_m[0]);
    }

    for it in 0..sq.queries {
        let active: Vec<usize> = (0..xs.nrows()).filter(|&b| best_m[b] >= 0.0).collect();
        if active.is_empty() {
            break;
        }
        let p = square_p_schedule(sq.p_init, it, sq.queries);
        let s = ((p * (h * w) as f64).sqrt().round() as usize).min(h.min(w).saturating_sub(1)).max(1);
        let mut cand = Array2::zeros((active.len(), n));
        for (k, &b) in active.iter().enumerate() {
            let rng = &mut rngs[b];
            let r0 = rng.below(h - s + 1);
            let c0 = rng.below(w - s + 1);
            let mut sign = rng.sign();
            let x = xs.row(b);
            let cur = best.row(b);
            let window = |sign: f64| {
                (r0..r0 + s).flat_map(move |r| (c0..c0 + s).map(move |c| (r * w + c, sign)))
            };
            let value = |i: usize, sign: f64| {
                let v = x[i] + sign * eps;
                cfg.clamp.map_or(v, |(lo, hi)| v.clamp(lo, hi))
            };
            if window(sign).all(|(i, sg)| (value(i, sg) - cur[i]).abs() < 1e-7) {
                sign = -sign;
            }
            let mut row = cand.row_mut(k);
            row.assign(&cur);
            for (i, sg) in window(sign) {
                row[i] = value(i, sg);
            }
        }
        let cand_m = margins(model, cand.view(), &active.iter().map(|&b| labels[b]).collect::<Vec<_>>());
        for (k, &b) in active.iter().enumerate() {
            if cand_m[k] < best_m[b] {
                best.row_mut(b).assign(&cand.row(k));
                best_m[b] = cand_m[k];
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(best_m[0]);
        }
    }
    Ok(best)
}

/// Black-box L-inf Square Attack on one input; random stream 0.
pub fn square_attack(model: &dyn Model, x: &[f64], y: usize, cfg: &AttackConfig, sq: &SquareConfig) -> Result<Vec<f64>> {
    Ok(square_attack_traced(model, x, y, cfg, sq)?.0)
}

/// As [`square_attack`], also returning the best margin after the
/// initialization and after every iteration.
pub fn square_attack_traced(
    model: &dyn Model,
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
    sq: &SquareConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
    check_batch(model, xs, &[y])?;
    let mut trace = Vec::new();
    let adv = square_rows(model, xs, &[y], cfg, sq, &[0], Some(&mut trace))?;
    Ok((adv.into_raw_vec_and_offset().0, trace))
}

pub fn square_attack_batch(
    model: &dyn Model,
    xs: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &AttackConfig,
    sq: &SquareConfig,
    first_index: u64,
) -> Result<Array2<f64>> {
    check_batch(model, xs, labels)?;
    let ids: Vec<u64> = (0..xs.nrows() as u64).map(|b| first_index + b).collect();
    square_rows(model, xs, labels, cfg, sq, &ids, None)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind {
    Pgd(AttackConfig),
    Square(AttackConfig, SquareConfig),
}

impl AttackKind {
    pub fn config(&self) -> &AttackConfig {
        match self {
            AttackKind::Pgd(c) | AttackKind::Square(c, _) => c,
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            AttackKind::Pgd(c) => format!("pgd-{}", c.norm),
            AttackKind::Square(..) => "square-linf".into(),
        }
    }

    fn run(&self, model: &dyn Model, xs: ArrayView2<'_, f64>, labels: &[usize], epsilon: f64, ids: &[u64]) -> Result<Array2<f64>> {
        match self {
            AttackKind::Pgd(c) => Ok(pgd_rows(model, xs, labels, &c.with_epsilon(epsilon), ids, true)),
            AttackKind::Square(c, sq) => square_rows(model, xs, labels, &c.with_epsilon(epsilon), sq, ids, None),
        }
    }
}

/// Accuracy under attack as a function of the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCurve {
    pub points: Vec<(f64, f64)>,
    pub attack: String,
}

impl RobustnessCurve {
    pub fn epsilons(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

const CURVE_HEADER: [&str; 2] = ["epsilon", "accuracy"];

pub fn write_curve_csv(curve: &RobustnessCurve, path: impl AsRef<Path>) -> Result<()> {
    write_csv(path, &CURVE_HEADER, curve.points.iter().map(|&(e, a)| vec![fmt_num(e), fmt_num(a)]))
}

pub fn read_curve_csv(path: impl AsRef<Path>, attack: &str) -> Result<RobustnessCurve> {
    let rows = read_numeric_csv(path, &CURVE_HEADER)?;
    Ok(RobustnessCurve {
        points: rows.iter().map(|r| (r[0], r[1])).collect(),
        attack: attack.into(),
    })
}

/// Per-sample record of the smallest budget at which an attack succeeded.
///
/// An adversarial example found inside a small ball is also inside every
/// larger one, so a sample broken at some budget counts as broken at all
/// larger budgets and is not attacked again.
#[derive(Debug, Clone)]
pub struct BreakRecord {
    pub broken_at: Vec<Option<f64>>,
}

impl BreakRecord {
    pub fn accuracy_at(&self, epsilon: f64) -> f64 {
        let intact = self.broken_at.iter().filter(|b| b.is_none_or(|e| e > epsilon)).count();
        intact as f64 / self.broken_at.len().max(1) as f64
    }
}

const ATTACK_CHUNK: usize = 100;

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::InvalidArgument("epsilon grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("epsilon grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Attack every still-unbroken sample at each budget of `grid` in turn.
pub fn break_record(model: &dyn Model, ds: &Dataset, kind: &AttackKind, grid: &[f64]) -> Result<BreakRecord> {
    kind.config().validate()?;
    if ds.n != model.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![model.input_dim()],
            got: vec![ds.n],
        });
    }
    let mut record = BreakRecord {
        broken_at: vec![None; ds.len()],
    };
    extend_record(model, ds, kind, grid, &mut record)?;
    Ok(record)
}

fn extend_record(model: &dyn Model, ds: &Dataset, kind: &AttackKind, grid: &[f64], record: &mut BreakRecord) -> Result<()> {
    for &eps in grid {
        let pending: Vec<usize> = (0..ds.len()).filter(|&i| record.broken_at[i].is_none()).collect();
        let flips = pool::map_chunks(pending.len(), ATTACK_CHUNK, |range| -> Result<Vec<bool>> {
            let idx = &pending[range];
            let batch = ds.batch(idx);
            let ids: Vec<u64> = idx.iter().map(|&i| i as u64).collect();
            let adv = kind.run(model, batch.xs.view(), &batch.labels, eps, &ids)?;
            let logits = model.logits_batch(adv.view());
            Ok(batch
                .labels
                .iter()
                .enumerate()
                .map(|(b, &y)| argmax(&logits.row(b).to_vec()) != y)
                .collect())
        });
        let mut k = 0;
        for chunk in flips {
            for flipped in chunk? {
                if flipped {
                    record.broken_at[pending[k]] = Some(eps);
                }
                k += 1;
            }
        }
    }
    Ok(())
}

pub fn robustness_curve(model: &dyn Model, ds: &Dataset, kind: &AttackKind, grid: &[f64]) -> Result<RobustnessCurve> {
    check_grid(grid)?;
    let record = break_record(model, ds, kind, grid)?;
    Ok(RobustnessCurve {
        points: grid.iter().map(|&e| (e, record.accuracy_at(e))).collect(),
        attack: kind.descriptor(),
    })
}

/// [`robustness_curve`] plus `extra` evenly spaced budgets inside the
/// interval where accuracy first drops to one half, for a sharper eps50.
pub fn robustness_curve_refined(
    model: &dyn Model,
    ds: &Dataset,
    kind: &AttackKind,
    grid: &[f64],
    extra: usize,
) -> Result<RobustnessCurve> {
    check_grid(grid)?;
    let mut record = break_record(model, ds, kind, grid)?;
    let mut eps: Vec<f64> = grid.to_vec();
    if let Some(i) = grid.iter().position(|&e| record.accuracy_at(e) <= 0.5) {
        if i > 0 {
            let (lo, hi) = (grid[i - 1], grid[i]);
            let inner: Vec<f64> = (1..=extra).map(|k| lo + (hi - lo) * k as f64 / (extra + 1) as f64).collect();
            // Samples first broken at `hi` are re-attacked at the interior budgets.
            let candidates: Vec<bool> = record.broken_at.iter().map(|b| *b == Some(hi)).collect();
            let mut partial = BreakRecord {
                broken_at: candidates.iter().map(|&c| if c { None } else { Some(0.0) }).collect(),
            };
            extend_record(model, ds, kind, &inner, &mut partial)?;
            for ((b, p), c) in record.broken_at.iter_mut().zip(partial.broken_at).zip(candidates) {
                if c && p.is_some() {
                    *b = p;
                }
            }
            eps.extend(inner);
            eps.sort_by(f64::total_cmp);
        }
    }
    Ok(RobustnessCurve {
        points: eps.iter().map(|&e| (e, record.accuracy_at(e))).collect(),
        attack: kind.descriptor(),
    })
}

/// Budget where accuracy first reaches 0.5, linearly interpolated.
pub fn epsilon_50(curve: &RobustnessCurve) -> Result<f64> {
    let p = &curve.points;
    if p.len() < 2 {
        return Err(Error::InsufficientData("eps50 needs at least two curve points".into()));
    }
    let i = p.iter().position(|&(_, a)| a <= 0.5).ok_or(Error::NoCrossing)?;
    if i == 0 {
        return Ok(p[0].0);
    }
    let (e0, a0) = p[i - 1];
    let (e1, a1) = p[i];
    Ok(e0 + (a0 - 0.5) * (e1 - e0) / (a0 - a1))
}

/// Zero followed by `count` log-spaced budgets over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut g = vec![0.0];
    if count == 1 {
        g.push(lo);
    } else {
        let (a, b) = (lo.ln(), hi.ln());
        g.extend((0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()));
    }
    g
}

/// Twenty log-spaced budgets over `[eps_train / 10, 10 eps_train]`, plus 0.
pub fn default_grid(eps_train: f64) -> Vec<f64> {
    log_grid(eps_train / 10.0, eps_train * 10.0, 20)
}
