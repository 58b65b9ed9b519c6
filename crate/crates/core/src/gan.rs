//! Residual generator: `G(x, target)` emits the change that moves `x` into
//! the target class, trained against a discriminator-classifier `D` with a
//! penalty on the residual length.

use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::adam::{Adam, AdamConfig};
use crate::alignment::cosine_sim;
use crate::array::{argmax, mean, norm2, std_dev};
use crate::data::{Dataset, SampleSource};
use crate::error::{Error, Result};
use crate::mlp::{cross_entropy, param_gradient, Mlp};
use crate::persist::{decode_model, encode_model};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub lambda_g: f64,
    pub lambda_reg_g: f64,
    pub lambda_dx: f64,
    pub lambda_dx_hat: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    /// Scale applied to the generator's freshly initialized output layer.
    pub generator_output_scale: f64,
    /// Data range for images; generated points are clamped into it.
    pub clamp: Option<(f64, f64)>,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            lambda_g: 0.3,
            lambda_reg_g: 0.5,
            lambda_dx: 1.0,
            lambda_dx_hat: 0.01,
            epochs: 10,
            batch_size: 50,
            lr: 1e-4,
            seed: 0,
            generator_hidden: vec![512, 512],
            discriminator_hidden: vec![512, 512],
            generator_output_scale: 1.0,
            clamp: None,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda_g, self.lambda_reg_g, self.lambda_dx, self.lambda_dx_hat];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        if !(self.lambda_dx_hat < self.lambda_dx) {
            return Err(Error::InvalidArgument(
                "the generated-sample discriminator weight must be smaller than the real-sample one".into(),
            ));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("batch_size and lr must be positive".into()));
        }
        Ok(())
    }
}

/// MLP over `[x, onehot(target)]` producing a residual shaped like `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGenerator {
    pub net: Mlp,
    pub class_count: usize,
    pub clamp: Option<(f64, f64)>,
}

impl ResidualGenerator {
    pub fn new(n: usize, class_count: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![n + class_count];
        sizes.extend_from_slice(hidden);
        sizes.push(n);
        Ok(Self {
            net: Mlp::new(&sizes, rng)?,
            class_count,
            clamp: None,
        })
    }

    pub fn from_net(net: Mlp, class_count: usize, clamp: Option<(f64, f64)>) -> Result<Self> {
        if net.input_dim() != net.output_dim() + class_count {
            return Err(Error::ShapeMismatch {
                expected: vec![net.output_dim() + class_count],
                got: vec![net.input_dim()],
            });
        }
        Ok(Self { net, class_count, clamp })
    }

    pub fn dim(&self) -> usize {
        self.net.output_dim()
    }

    fn conditioned(&self, xs: ArrayView2<'_, f64>, targets: &[usize]) -> Array2<f64> {
        let mut onehot = Array2::zeros((xs.nrows(), self.class_count));
        for (b, &t) in targets.iter().enumerate() {
            onehot[[b, t]] = 1.0;
        }
        concatenate(Axis(1), &[xs, onehot.view()]).expect("same row count")
    }

    /// Residuals, and the mask of coordinates left unclamped.
    fn residuals(&self, xs: ArrayView2<'_, f64>, raw: &Array2<f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        match self.clamp {
            None => (raw.clone(), None),
            Some((lo, hi)) => {
                let mut delta = raw.clone();
                let mut mask = Array2::ones(raw.raw_dim());
                ndarray::Zip::from(&mut delta).and(&mut mask).and(xs).for_each(|d, m, &x| {
                    let moved = x + *d;
                    if moved < lo || moved > hi {
                        *m = 0.0;
                    }
                    *d = moved.clamp(lo, hi) - x;
                });
                (delta, Some(mask))
            }
        }
    }

    /// Residuals toward `targets`, one row per input.
    pub fn generate(&self, xs: ArrayView2<'_, f64>, targets: &[usize]) -> Array2<f64> {
        let raw = self.net.forward_batch(self.conditioned(xs, targets).view());
        self.residuals(xs, &raw).0
    }
}

/// `G(x, target)` for a single input.
pub fn generate_delta(g: &ResidualGenerator, x: &[f64], target_class: usize) -> Result<Vec<f64>> {
    if x.len() != g.dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![g.dim()],
            got: vec![x.len()],
        });
    }
    if target_class >= g.class_count {
        return Err(Error::InvalidArgument(format!("target class {target_class} out of range")));
    }
    let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
    Ok(g.generate(xs, &[target_class]).into_raw_vec_and_offset().0)
}

/// `|delta| / sqrt(n)` and its gradient.
pub fn reg_g(delta: &[f64]) -> (f64, Vec<f64>) {
    let n = delta.len() as f64;
    let norm = norm2(delta);
    if norm == 0.0 {
        return (0.0, vec![0.0; delta.len()]);
    }
    (norm / n.sqrt(), delta.iter().map(|d| d / (norm * n.sqrt())).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanEpoch {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Discriminator plus generator loss on the validation set.
    pub val_total_loss: f64,
    pub d_accuracy: f64,
    pub mean_residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GanHistory {
    pub records: Vec<GanEpoch>,
    pub best_epoch: Option<usize>,
}

fn flip(labels: &[usize]) -> Vec<usize> {
    labels.iter().map(|&y| 1 - y).collect()
}

struct Losses {
    d: f64,
    g: f64,
    d_accuracy: f64,
    residual_norm: f64,
}

fn evaluate(g: &ResidualGenerator, d: &Mlp, ds: &Dataset, cfg: &GanConfig) -> Losses {
    let batch = ds.all();
    let targets = flip(&batch.labels);
    let delta = g.generate(batch.xs.view(), &targets);
    let moved = &batch.xs + &delta;
    let real_logits = d.forward_batch(batch.xs.view());
    let (ce_real, _) = cross_entropy(real_logits.view(), &batch.labels);
    let moved_logits = d.forward_batch(moved.view());
    let (ce_moved, _) = cross_entropy(moved_logits.view(), &batch.labels);
    let (ce_fool, _) = cross_entropy(moved_logits.view(), &targets);
    let norms: Vec<f64> = delta.rows().into_iter().map(|r| norm2(&r.to_vec())).collect();
    let reg = mean(&norms) / (ds.n as f64).sqrt();
    let correct = batch
        .labels
        .iter()
        .enumerate()
        .filter(|&(b, &y)| argmax(&real_logits.row(b).to_vec()) == y)
        .count();
    Losses {
        d: cfg.lambda_dx * ce_real + cfg.lambda_dx_hat * ce_moved,
        g: cfg.lambda_g * ce_fool + cfg.lambda_reg_g * reg,
        d_accuracy: correct as f64 / ds.len().max(1) as f64,
        residual_norm: mean(&norms),
    }
}

/// Alternating updates, one discriminator step then one generator step
/// per batch. The retained epoch minimizes the total validation loss.
pub fn train_residual_gan(
    source: &dyn SampleSource,
    val: &Dataset,
    cfg: &GanConfig,
) -> Result<(ResidualGenerator, Mlp, GanHistory)> {
    cfg.validate()?;
    if source.class_count() != 2 {
        return Err(Error::InvalidArgument("residual generation is implemented for binary datasets".into()));
    }
    let n = source.input_dim();
    let mut rng = Rng::new(cfg.seed);
    let mut g = ResidualGenerator::new(n, 2, &cfg.generator_hidden, &mut rng)?;
    g.net.scale_output(cfg.generator_output_scale);
    g.clamp = cfg.clamp;
    let mut d_sizes = vec![n];
    d_sizes.extend_from_slice(&cfg.discriminator_hidden);
    d_sizes.push(2);
    let mut d = Mlp::new(&d_sizes, &mut rng)?;
    let mut adam_g = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut adam_d = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut history = GanHistory::default();
    let mut best: Option<(f64, ResidualGenerator, Mlp)> = None;
    let sqrt_n = (n as f64).sqrt();

    for epoch in 0..cfg.epochs {
        let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
        for batch in source.epoch_batches(epoch, cfg.batch_size, cfg.seed) {
            let rows = batch.labels.len();
            let targets = flip(&batch.labels);
            let cond = g.conditioned(batch.xs.view(), &targets);

            // Discriminator step on real and generated points.
            let delta = g.generate(batch.xs.view(), &targets);
            let moved = &batch.xs + &delta;
            let (l_real, mut grad_d) = param_gradient(&d, batch.xs.view(), &batch.labels, cfg.lambda_dx, None)?;
            let (l_moved, grad_moved) = param_gradient(&d, moved.view(), &batch.labels, cfg.lambda_dx_hat, None)?;
            grad_d.add_scaled(&grad_moved, 1.0);
            adam_d.step(d.param_slices_mut(), grad_d.slices())?;

            // Generator step against the updated discriminator.
            let g_tape = g.net.tape(cond.view());
            let (delta, mask) = g.residuals(batch.xs.view(), g_tape.logits());
            let moved = &batch.xs + &delta;
            let d_tape = d.tape(moved.view());
            let (ce_fool, mut adj) = cross_entropy(d_tape.logits().view(), &targets);
            adj.mapv_inplace(|v| v * cfg.lambda_g);
            let mut upstream = d_tape.backward(adj.view(), true, false).input.expect("requested input");
            let mut reg = 0.0;
            for (b, mut row) in upstream.rows_mut().into_iter().enumerate() {
                let dr = delta.row(b);
                let norm = dr.dot(&dr).sqrt();
                reg += norm / sqrt_n;
                if norm > 0.0 {
                    row.scaled_add(cfg.lambda_reg_g / (rows as f64 * norm * sqrt_n), &dr);
                }
            }
            if let Some(mask) = mask {
                upstream *= &mask;
            }
            let g_loss = cfg.lambda_g * ce_fool + cfg.lambda_reg_g * reg / rows as f64;
            let grad_g = g_tape.backward(upstream.view(), false, true).params.expect("requested params");
            let d_loss = l_real + l_moved;
            if !(d_loss.is_finite() && g_loss.is_finite() && grad_g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    step: steps,
                    loss: d_loss + g_loss,
                });
            }
            adam_g.step(g.net.param_slices_mut(), grad_g.slices())?;
            d_sum += d_loss;
            g_sum += g_loss;
            steps += 1;
        }
        let eval = evaluate(&g, &d, val, cfg);
        let total = eval.d + eval.g;
        history.records.push(GanEpoch {
            epoch,
            d_loss: d_sum / steps.max(1) as f64,
            g_loss: g_sum / steps.max(1) as f64,
            val_total_loss: total,
            d_accuracy: eval.d_accuracy,
            mean_residual_norm: eval.residual_norm,
        });
        if best.as_ref().is_none_or(|(t, _, _)| total < *t) {
            best = Some((total, g.clone(), d.clone()));
            history.best_epoch = Some(epoch);
        }
    }
    let (g, d) = best.map_or((g, d), |(_, g, d)| (g, d));
    Ok((g, d, history))
}

/// Mean and standard deviation of `cos(delta_x, G(x, not y))`.
pub fn validate_generator(g: &ResidualGenerator, ds: &Dataset) -> Result<(f64, f64)> {
    let sims = generator_similarities(g, ds)?;
    Ok((mean(&sims), std_dev(&sims)))
}

pub fn generator_similarities(g: &ResidualGenerator, ds: &Dataset) -> Result<Vec<f64>> {
    if ds.n != g.dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![g.dim()],
            got: vec![ds.n],
        });
    }
    let batch = ds.all();
    let deltas = batch.deltas.ok_or(Error::MissingDelta(0))?;
    let estimated = g.generate(batch.xs.view(), &flip(&batch.labels));
    Ok((0..ds.len())
        .map(|b| {
            cosine_sim(
                &deltas.row(b).to_vec(),
                &estimated.row(b).to_vec(),
            )
        })
        .collect())
}

/// Replace each sample's residual with the generator's estimate.
pub fn attach_generated_deltas(g: &ResidualGenerator, ds: &Dataset) -> Result<Dataset> {
    let batch = ds.all();
    let estimated = g.generate(batch.xs.view(), &flip(&batch.labels));
    let deltas = estimated.rows().into_iter().map(|r| r.to_vec()).collect();
    ds.clone().with_deltas(deltas)
}

/// Generator file: the model container followed by nothing else; the
/// class count and clamp range go to the manifest.
pub fn save_generator(g: &ResidualGenerator, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_model(&g.net))?;
    Ok(())
}

pub fn load_generator(path: impl AsRef<Path>, class_count: usize, clamp: Option<(f64, f64)>) -> Result<ResidualGenerator> {
    ResidualGenerator::from_net(decode_model(&std::fs::read(path)?)?, class_count, clamp)
}

/// First `n` columns of a conditioned input, for callers that build their
/// own generator inputs.
pub fn strip_condition(cond: ArrayView2<'_, f64>, n: usize) -> Array2<f64> {
    cond.slice(s![.., ..n]).to_owned()
}
