//! Plain, PGD-adversarial and alignment-penalized training of MLPs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::adam::{Adam, AdamConfig};
use crate::alignment::{evaluate_alignment, tilde_c_rows};
use crate::array::argmax;
use crate::attacks::{epsilon_50, log_grid, pgd_rows, robustness_curve, AttackConfig, AttackKind};
use crate::data::{Dataset, SampleSource};
use crate::error::{Error, Result};
use crate::mlp::{param_gradient, CosineToTarget, InputGradientTerm, Mlp};
use crate::model::Model;
use crate::table::{fmt_num, read_numeric_csv, write_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Baseline,
    Pgd,
    AlignPenalty,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Pgd => "pgd",
            Method::AlignPenalty => "align_penalty",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "pgd" => Ok(Method::Pgd),
            "align_penalty" => Ok(Method::AlignPenalty),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Validation metric used to pick the retained epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    ValAccuracy,
    ValEps50,
}

impl FromStr for EarlyStop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val_accuracy" => Ok(EarlyStop::ValAccuracy),
            "val_eps50" => Ok(EarlyStop::ValEps50),
            other => Err(Error::InvalidArgument(format!("unknown early-stop metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_alpha: f64,
    /// Inner attack for `Method::Pgd`.
    pub pgd: Option<AttackConfig>,
    pub seed: u64,
    pub early_stop: EarlyStop,
    /// L-inf attack behind the validation eps50.
    pub val_attack: AttackConfig,
    /// Budgets for the validation eps50, starting at 0.
    pub val_grid: Vec<f64>,
    /// Validation samples used for the eps50 estimate.
    pub val_eps50_samples: usize,
}

impl TrainConfig {
    /// Defaults around an L-inf training budget `eps_train` with step `step`.
    pub fn new(method: Method, eps_train: f64, step: f64) -> Self {
        Self {
            method,
            epochs: 20,
            batch_size: 50,
            lr: 1e-4,
            lambda_alpha: 0.1,
            pgd: Some(AttackConfig::pgd(crate::attacks::Norm::Inf, eps_train, step)),
            seed: 0,
            early_stop: EarlyStop::ValEps50,
            val_attack: AttackConfig::pgd(crate::attacks::Norm::Inf, eps_train, step),
            val_grid: log_grid(eps_train / 10.0, eps_train * 10.0, 7),
            val_eps50_samples: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_alpha >= 0.0) {
            return Err(Error::InvalidArgument("lambda_alpha must be >= 0".into()));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("batch_size and lr must be positive".into()));
        }
        if self.method == Method::Pgd {
            self.pgd
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("pgd training needs an attack config".into()))?
                .validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_eps50: Option<f64>,
    pub val_alpha_dx: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

pub const HISTORY_HEADER: [&str; 5] = ["epoch", "train_loss", "val_accuracy", "val_eps50", "val_alpha_dx"];

pub fn write_history_csv(history: &TrainHistory, path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path,
        &HISTORY_HEADER,
        history.records.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_num(r.train_loss),
                fmt_num(r.val_accuracy),
                fmt_num(r.val_eps50.unwrap_or(f64::NAN)),
                fmt_num(r.val_alpha_dx.unwrap_or(f64::NAN)),
            ]
        }),
    )
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<TrainHistory> {
    let rows = read_numeric_csv(path, &HISTORY_HEADER)?;
    let opt = |v: f64| (!v.is_nan()).then_some(v);
    Ok(TrainHistory {
        records: rows
            .iter()
            .map(|r| EpochRecord {
                epoch: r[0] as usize,
                train_loss: r[1],
                val_accuracy: r[2],
                val_eps50: opt(r[3]),
                val_alpha_dx: opt(r[4]),
            })
            .collect(),
        best_epoch: None,
    })
}

pub fn accuracy(model: &dyn Model, ds: &Dataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let batch = ds.all();
    let logits = model.logits_batch(batch.xs.view());
    let correct = batch
        .labels
        .iter()
        .enumerate()
        .filter(|&(b, &y)| argmax(&logits.row(b).to_vec()) == y)
        .count();
    correct as f64 / ds.len() as f64
}

/// Validation eps50 on a coarse grid; the largest budget when accuracy
/// never falls to one half on it.
pub fn coarse_eps50(model: &dyn Model, val: &Dataset, attack: &AttackConfig, grid: &[f64]) -> Result<f64> {
    let curve = robustness_curve(model, val, &AttackKind::Pgd(attack.clone()), grid)?;
    match epsilon_50(&curve) {
        Err(Error::NoCrossing) => Ok(*grid.last().expect("non-empty grid")),
        other => other,
    }
}

fn penalty_coeffs(model: &Mlp, xs: &Array2<f64>, labels: &[usize]) -> Array2<f64> {
    let classes = model.output_dim();
    let rows = tilde_c_rows(model, xs.view(), labels);
    let logits = (classes > 2).then(|| model.forward_batch(xs.view()));
    let mut coeffs = Array2::zeros((labels.len(), classes));
    for (b, (&y, c)) in labels.iter().zip(rows).enumerate() {
        // With no usable gradient gap, fall back to the strongest rival logit.
        let c = c.unwrap_or_else(|| {
            let l = logits.as_ref().expect("multiclass").row(b);
            (0..classes).filter(|&k| k != y).fold(usize::MAX, |best, k| {
                if best == usize::MAX || l[k] > l[best] {
                    k
                } else {
                    best
                }
            })
        });
        coeffs[[b, c]] = 1.0;
        coeffs[[b, y]] = -1.0;
    }
    coeffs
}

/// Train with the method in `cfg`, keeping the best epoch on `val`.
pub fn train(model: Mlp, source: &dyn SampleSource, val: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainHistory)> {
    cfg.validate()?;
    if source.input_dim() != model.input_dim() || source.class_count() != model.output_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![model.input_dim(), model.output_dim()],
            got: vec![source.input_dim(), source.class_count()],
        });
    }
    let penalized = cfg.method == Method::AlignPenalty && cfg.lambda_alpha > 0.0;
    if cfg.method == Method::AlignPenalty && !source.has_delta() {
        return Err(Error::MissingDelta(0));
    }
    let attack = match cfg.method {
        Method::Pgd => cfg.pgd.clone().filter(|a| a.epsilon > 0.0),
        _ => None,
    };
    let val_small = val.head(cfg.val_eps50_samples);
    let mut model = model;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Mlp)> = None;
    let per_epoch = source.samples_per_epoch() as u64;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let mut offset = 0u64;
        for batch in source.epoch_batches(epoch, cfg.batch_size, cfg.seed) {
            let rows = batch.labels.len() as u64;
            let xs = match &attack {
                Some(a) => {
                    let ids: Vec<u64> = (0..rows).map(|b| epoch as u64 * per_epoch + offset + b).collect();
                    pgd_rows(&model, batch.xs.view(), &batch.labels, a, &ids, true)
                }
                None => batch.xs,
            };
            offset += rows;
            let result = if penalized {
                let deltas = batch.deltas.as_ref().ok_or(Error::MissingDelta(0))?;
                let coeffs = penalty_coeffs(&model, &xs, &batch.labels);
                let functional = CosineToTarget { targets: deltas.view() };
                let term = InputGradientTerm {
                    coeffs: coeffs.view(),
                    functional: &functional,
                    weight: -cfg.lambda_alpha,
                };
                param_gradient(&model, xs.view(), &batch.labels, 1.0, Some(&term))
            } else {
                param_gradient(&model, xs.view(), &batch.labels, 1.0, None)
            };
            let (loss, grad) = result.map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence {
                    epoch,
                    step: steps,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            adam.step(model.param_slices_mut(), grad.slices())?;
            loss_sum += loss;
            steps += 1;
        }

        let val_accuracy = accuracy(&model, val);
        let val_eps50 = if cfg.early_stop == EarlyStop::ValEps50 && !val_small.is_empty() {
            Some(coarse_eps50(&model, &val_small, &cfg.val_attack, &cfg.val_grid)?)
        } else {
            None
        };
        let val_alpha_dx = if val.has_delta() {
            Some(evaluate_alignment(&model, val)?.alpha_dx_mean)
        } else {
            None
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / steps.max(1) as f64,
            val_accuracy,
            val_eps50,
            val_alpha_dx,
        });
        let score = match cfg.early_stop {
            EarlyStop::ValEps50 => val_eps50.unwrap_or(val_accuracy),
            EarlyStop::ValAccuracy => val_accuracy,
        };
        // Ties go to the later epoch.
        if best.as_ref().is_none_or(|(s, _)| score >= *s) {
            best = Some((score, model.clone()));
            history.best_epoch = Some(epoch);
        }
    }
    Ok((best.map_or(model, |(_, m)| m), history))
}

fn with_method(cfg: &TrainConfig, method: Method) -> TrainConfig {
    TrainConfig { method, ..cfg.clone() }
}

pub fn train_baseline(model: Mlp, source: &dyn SampleSource, val: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainHistory)> {
    train(model, source, val, &with_method(cfg, Method::Baseline))
}

pub fn train_pgd(model: Mlp, source: &dyn SampleSource, val: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainHistory)> {
    train(model, source, val, &with_method(cfg, Method::Pgd))
}

pub fn train_align_penalty(model: Mlp, source: &dyn SampleSource, val: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainHistory)> {
    train(model, source, val, &with_method(cfg, Method::AlignPenalty))
}
