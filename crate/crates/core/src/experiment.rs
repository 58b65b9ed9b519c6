//! Experiment configs and the per-run recipes behind the command-line
//! subcommands. A run is fully determined by its config and seed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::alignment::{evaluate_alignment, write_alignment_csv, AlignmentReport};
use crate::attacks::{
    default_grid, epsilon_50, robustness_curve_refined, write_curve_csv, AttackConfig, AttackKind, Norm, RobustnessCurve,
    SquareConfig,
};
use crate::data::{
    filter_classes, gen_squares, load_mnist_idx, sample_spheres, save_dataset, write_manifest, Dataset, SampleSource,
    SpheresStream, SquaresConfig, Split,
};
use crate::error::{Error, Result};
use crate::gan::{
    attach_generated_deltas, generator_similarities, save_generator, train_residual_gan, GanConfig, GanHistory,
    ResidualGenerator,
};
use crate::mlp::Mlp;
use crate::persist::{load_model, save_model};
use crate::rng::Rng;
use crate::table::{fmt_num, write_csv};
use crate::training::{train, write_history_csv, EarlyStop, Method, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Spheres,
    Squares32,
    Mnist35,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Spheres => "spheres",
            DatasetKind::Squares32 => "squares32",
            DatasetKind::Mnist35 => "mnist35",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spheres" => Ok(DatasetKind::Spheres),
            "squares32" => Ok(DatasetKind::Squares32),
            "mnist35" => Ok(DatasetKind::Mnist35),
            other => Err(Error::InvalidArgument(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Spheres dimension.
    pub dim: usize,
    /// Fixed training set size; for Spheres only used by `gen-data`.
    pub train_count: usize,
    /// Fresh Spheres samples per epoch.
    pub per_epoch: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Directory holding the four MNIST IDX files.
    pub mnist_dir: Option<PathBuf>,
    /// Run label; defaults to the method name.
    pub setup: String,
    pub method: Method,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_alpha: f64,
    pub eps_train: f64,
    pub step: f64,
    pub early_stop: EarlyStop,
    pub seeds: Vec<u64>,
    /// Test samples attacked for the curves.
    pub attack_samples: usize,
    /// Extra budgets inside the eps50 bracket.
    pub refine: usize,
    pub square_queries: usize,
    pub square_p_init: f64,
    /// Test samples given to the Square Attack; 0 skips it.
    pub square_samples: usize,
    pub gan_epochs: usize,
    pub gan_lr: f64,
    pub gan_hidden: Vec<usize>,
    pub gan_output_scale: f64,
    pub lambda_g: f64,
    pub lambda_reg_g: f64,
    pub lambda_dx: f64,
    pub lambda_dx_hat: f64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for a dataset, before any config keys are applied.
    pub fn defaults(dataset: DatasetKind) -> Self {
        let base = Self {
            dataset,
            dim: 500,
            train_count: 10_000,
            per_epoch: 100_000,
            val_count: 200,
            test_count: 1000,
            mnist_dir: None,
            setup: String::new(),
            method: Method::Baseline,
            hidden: vec![1000, 1000],
            epochs: 20,
            batch_size: 50,
            lr: 1e-4,
            lambda_alpha: 0.1,
            eps_train: 0.005,
            step: 0.002,
            early_stop: EarlyStop::ValEps50,
            seeds: vec![1],
            attack_samples: 1000,
            refine: 8,
            square_queries: 5000,
            square_p_init: 0.8,
            square_samples: 100,
            gan_epochs: 10,
            gan_lr: 1e-4,
            gan_hidden: vec![1000, 1000],
            gan_output_scale: 1.0,
            lambda_g: 0.3,
            lambda_reg_g: 0.5,
            lambda_dx: 1.0,
            lambda_dx_hat: 0.01,
            out: PathBuf::from("runs"),
        };
        match dataset {
            DatasetKind::Spheres => base,
            DatasetKind::Squares32 => Self {
                hidden: vec![512, 512],
                gan_hidden: vec![512, 512],
                batch_size: 12,
                eps_train: 0.2,
                step: 0.02,
                epochs: 30,
                ..base
            },
            DatasetKind::Mnist35 => Self {
                hidden: vec![512, 512],
                gan_hidden: vec![512, 512],
                batch_size: 12,
                eps_train: 0.3,
                step: 0.02,
                epochs: 30,
                val_count: 1155,
                test_count: 1902,
                ..base
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.dataset {
            DatasetKind::Spheres => self.dim,
            DatasetKind::Squares32 => SquaresConfig::default().dim(),
            DatasetKind::Mnist35 => 28 * 28,
        }
    }

    /// Image datasets live in `[-1, 1]`.
    pub fn clamp(&self) -> Option<(f64, f64)> {
        match self.dataset {
            DatasetKind::Spheres => None,
            DatasetKind::Squares32 | DatasetKind::Mnist35 => Some((-1.0, 1.0)),
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(2);
        sizes
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut pgd = AttackConfig::pgd(Norm::Inf, self.eps_train, self.step);
        pgd.clamp = self.clamp();
        let mut cfg = TrainConfig::new(self.method, self.eps_train, self.step);
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.lr = self.lr;
        cfg.lambda_alpha = self.lambda_alpha;
        cfg.pgd = Some(pgd.clone());
        cfg.val_attack = pgd;
        cfg.seed = seed;
        cfg.early_stop = self.early_stop;
        cfg
    }

    pub fn gan_config(&self, seed: u64) -> GanConfig {
        GanConfig {
            lambda_g: self.lambda_g,
            lambda_reg_g: self.lambda_reg_g,
            lambda_dx: self.lambda_dx,
            lambda_dx_hat: self.lambda_dx_hat,
            epochs: self.gan_epochs,
            batch_size: self.batch_size,
            lr: self.gan_lr,
            seed,
            generator_hidden: self.gan_hidden.clone(),
            discriminator_hidden: self.hidden.clone(),
            generator_output_scale: self.gan_output_scale,
            clamp: self.clamp(),
        }
    }

    /// `<out>/<setup>_<dataset>_seed<seed>`.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("{}_{}_seed{seed}", self.setup, self.dataset))
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        msg: format!("bad value {value:?} for {key}"),
    })
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(line, key, v))
        .collect()
}

/// Parse flat `key = value` text with `#` comments.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let key = key.trim().to_string();
        if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
            return Err(Error::Config {
                line: i + 1,
                msg: format!("duplicate key {key}"),
            });
        }
    }
    let dataset = match entries.remove("dataset") {
        Some((line, v)) => v.parse().map_err(|e: Error| Error::Config { line, msg: e.to_string() })?,
        None => {
            return Err(Error::Config {
                line: 0,
                msg: "missing key dataset".into(),
            })
        }
    };
    let mut cfg = ExperimentConfig::defaults(dataset);
    let mut setup = None;
    for (key, (line, v)) in entries {
        let v = v.as_str();
        match key.as_str() {
            "dim" => cfg.dim = parse_value(line, &key, v)?,
            "train_count" => cfg.train_count = parse_value(line, &key, v)?,
            "per_epoch" => cfg.per_epoch = parse_value(line, &key, v)?,
            "val_count" => cfg.val_count = parse_value(line, &key, v)?,
            "test_count" => cfg.test_count = parse_value(line, &key, v)?,
            "mnist_dir" => cfg.mnist_dir = Some(PathBuf::from(v)),
            "setup" => setup = Some(v.to_string()),
            "method" => cfg.method = v.parse().map_err(|e: Error| Error::Config { line, msg: e.to_string() })?,
            "hidden" => cfg.hidden = parse_list(line, &key, v)?,
            "epochs" => cfg.epochs = parse_value(line, &key, v)?,
            "batch_size" => cfg.batch_size = parse_value(line, &key, v)?,
            "lr" => cfg.lr = parse_value(line, &key, v)?,
            "lambda_alpha" => cfg.lambda_alpha = parse_value(line, &key, v)?,
            "eps_train" => cfg.eps_train = parse_value(line, &key, v)?,
            "step" => cfg.step = parse_value(line, &key, v)?,
            "early_stop" => cfg.early_stop = v.parse().map_err(|e: Error| Error::Config { line, msg: e.to_string() })?,
            "seeds" => cfg.seeds = parse_list(line, &key, v)?,
            "attack_samples" => cfg.attack_samples = parse_value(line, &key, v)?,
            "refine" => cfg.refine = parse_value(line, &key, v)?,
            "square_queries" => cfg.square_queries = parse_value(line, &key, v)?,
            "square_p_init" => cfg.square_p_init = parse_value(line, &key, v)?,
            "square_samples" => cfg.square_samples = parse_value(line, &key, v)?,
            "gan_epochs" => cfg.gan_epochs = parse_value(line, &key, v)?,
            "gan_lr" => cfg.gan_lr = parse_value(line, &key, v)?,
            "gan_hidden" => cfg.gan_hidden = parse_list(line, &key, v)?,
            "gan_output_scale" => cfg.gan_output_scale = parse_value(line, &key, v)?,
            "lambda_g" => cfg.lambda_g = parse_value(line, &key, v)?,
            "lambda_reg_g" => cfg.lambda_reg_g = parse_value(line, &key, v)?,
            "lambda_dx" => cfg.lambda_dx = parse_value(line, &key, v)?,
            "lambda_dx_hat" => cfg.lambda_dx_hat = parse_value(line, &key, v)?,
            "out" => cfg.out = PathBuf::from(v),
            _ => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key {key}"),
                })
            }
        }
    }
    cfg.setup = setup.unwrap_or_else(|| cfg.method.to_string());
    if cfg.seeds.is_empty() {
        return Err(Error::Config {
            line: 0,
            msg: "seeds must not be empty".into(),
        });
    }
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ConfigNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_config(&text)
}

/// Independent data seed for one split of one run.
fn split_seed(seed: u64, split: Split) -> u64 {
    let k = match split {
        Split::Train => 1,
        Split::Val => 2,
        Split::Test => 3,
    };
    Rng::child(seed, k).next_u64()
}

pub enum TrainData {
    Stream(SpheresStream),
    Fixed(Dataset),
}

impl TrainData {
    pub fn source(&self) -> &dyn SampleSource {
        match self {
            TrainData::Stream(s) => s,
            TrainData::Fixed(d) => d,
        }
    }
}

pub struct DataBundle {
    pub train: TrainData,
    pub val: Dataset,
    pub test: Dataset,
}

fn mnist35(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let dir = cfg
        .mnist_dir
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("mnist35 needs mnist_dir".into()))?;
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((filter_classes(&train, &[3, 5])?, filter_classes(&test, &[3, 5])?))
}

/// Train, validation and test data for a run.
pub fn build_data(cfg: &ExperimentConfig, seed: u64) -> Result<DataBundle> {
    let (train_seed, val_seed, test_seed) = (split_seed(seed, Split::Train), split_seed(seed, Split::Val), split_seed(seed, Split::Test));
    match cfg.dataset {
        DatasetKind::Spheres => Ok(DataBundle {
            train: TrainData::Stream(SpheresStream {
                dim: cfg.dim,
                per_epoch: cfg.per_epoch,
                seed: train_seed,
            }),
            val: sample_spheres(cfg.val_count, cfg.dim, val_seed)?.with_split(Split::Val),
            test: sample_spheres(cfg.test_count, cfg.dim, test_seed)?.with_split(Split::Test),
        }),
        DatasetKind::Squares32 => {
            let sq = SquaresConfig::default();
            Ok(DataBundle {
                train: TrainData::Fixed(gen_squares(cfg.train_count, &sq, train_seed)?.with_split(Split::Train)),
                val: gen_squares(cfg.val_count, &sq, val_seed)?.with_split(Split::Val),
                test: gen_squares(cfg.test_count, &sq, test_seed)?.with_split(Split::Test),
            })
        }
        DatasetKind::Mnist35 => {
            let (train, test) = mnist35(cfg)?;
            // The validation split is held out from the end of the training file.
            let cut = train.len().saturating_sub(cfg.val_count);
            let val = Dataset::new(train.name.clone(), train.n, train.class_count, train.samples[cut..].to_vec())?;
            let fit = Dataset::new(train.name.clone(), train.n, train.class_count, train.samples[..cut].to_vec())?;
            Ok(DataBundle {
                train: TrainData::Fixed(fit.with_split(Split::Train)),
                val: val.with_split(Split::Val),
                test: test.head(cfg.test_count).with_split(Split::Test),
            })
        }
    }
}

fn config_entries(cfg: &ExperimentConfig, seed: u64) -> Vec<(&'static str, String)> {
    vec![
        ("setup", cfg.setup.clone()),
        ("dataset", cfg.dataset.to_string()),
        ("method", cfg.method.to_string()),
        ("seed", seed.to_string()),
        ("eps_train", fmt_num(cfg.eps_train)),
        ("step", fmt_num(cfg.step)),
        ("lambda_alpha", fmt_num(cfg.lambda_alpha)),
        ("epochs", cfg.epochs.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("lr", fmt_num(cfg.lr)),
    ]
}

/// Write train/val/test GDA1 files and their manifests under
/// `<out>/data/`. Returns the written dataset paths.
pub fn gen_data(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = cfg.out.join("data");
    fs::create_dir_all(&dir)?;
    let bundle = build_data(cfg, seed)?;
    let train = match bundle.train {
        TrainData::Fixed(d) => d,
        TrainData::Stream(s) => sample_spheres(cfg.train_count, s.dim, s.seed)?.with_split(Split::Train),
    };
    let mut written = Vec::new();
    for ds in [&train, &bundle.val, &bundle.test] {
        let stem = format!("{}_seed{seed}_{}", cfg.dataset, ds.split);
        let path = dir.join(format!("{stem}.gda"));
        save_dataset(ds, &path)?;
        let mut entries = vec![
            ("name", ds.name.clone()),
            ("n", ds.n.to_string()),
            ("count", ds.len().to_string()),
            ("seed", seed.to_string()),
            ("split", ds.split.to_string()),
        ];
        if cfg.dataset == DatasetKind::Squares32 {
            let sq = SquaresConfig::default();
            entries.extend([
                ("side", sq.side.to_string()),
                ("square_sides", format!("{},{}", sq.square_sides[0], sq.square_sides[1])),
                ("sigma_noise", fmt_num(sq.sigma_noise)),
                ("sigma_blur", fmt_num(sq.sigma_blur)),
            ]);
        }
        write_manifest(dir.join(format!("{stem}.txt")), &entries)?;
        written.push(path);
    }
    Ok(written)
}

pub const RUN_MANIFEST: &str = "run.txt";
pub const MODEL_FILE: &str = "model.gam";
pub const HISTORY_FILE: &str = "history.csv";
pub const ALIGNMENT_FILE: &str = "alignment.csv";
pub const CURVE_LINF_FILE: &str = "curve_pgd_linf.csv";
pub const CURVE_L2_FILE: &str = "curve_pgd_l2.csv";
pub const CURVE_SQUARE_FILE: &str = "curve_square_linf.csv";

/// Train one model and write its manifest, parameters and history.
pub fn train_run(cfg: &ExperimentConfig, seed: u64) -> Result<(PathBuf, TrainHistory)> {
    let dir = cfg.run_dir(seed);
    fs::create_dir_all(&dir)?;
    let bundle = build_data(cfg, seed)?;
    let model = Mlp::new(&cfg.layer_sizes(), &mut Rng::new(seed))?;
    let (model, history) = train(model, bundle.train.source(), &bundle.val, &cfg.train_config(seed))?;
    let mut entries = config_entries(cfg, seed);
    entries.push(("best_epoch", history.best_epoch.map_or("none".into(), |e| e.to_string())));
    write_manifest(dir.join(RUN_MANIFEST), &entries)?;
    save_model(&model, dir.join(MODEL_FILE))?;
    write_history_csv(&history, dir.join(HISTORY_FILE))?;
    Ok((dir, history))
}

fn trained_model(cfg: &ExperimentConfig, seed: u64) -> Result<Mlp> {
    let path = cfg.run_dir(seed).join(MODEL_FILE);
    if !path.exists() {
        return Err(Error::InvalidArgument(format!("no trained model at {}; run train first", path.display())));
    }
    load_model(path)
}

/// The three evaluation attacks of a config, with their budget grids.
pub fn evaluation_attacks(cfg: &ExperimentConfig) -> Vec<(AttackKind, Vec<f64>, &'static str)> {
    let clamp = cfg.clamp();
    let with_clamp = |mut c: AttackConfig| {
        c.clamp = clamp;
        c
    };
    let linf = with_clamp(AttackConfig::pgd(Norm::Inf, 0.0, cfg.step));
    let l2 = with_clamp(AttackConfig::pgd(Norm::Two, 0.0, cfg.step));
    let square = AttackKind::Square(
        linf.clone(),
        SquareConfig {
            queries: cfg.square_queries,
            p_init: cfg.square_p_init,
            shape: None,
        },
    );
    let l2_scale = (cfg.input_dim() as f64).sqrt();
    vec![
        (AttackKind::Pgd(linf), default_grid(cfg.eps_train), CURVE_LINF_FILE),
        (AttackKind::Pgd(l2), default_grid(cfg.eps_train * l2_scale), CURVE_L2_FILE),
        (square, default_grid(cfg.eps_train), CURVE_SQUARE_FILE),
    ]
}

/// Robustness curves for a trained run; the Square Attack uses its own
/// smaller sample budget and is skipped when that budget is 0.
pub fn attack_run(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RobustnessCurve>> {
    let model = trained_model(cfg, seed)?;
    let bundle = build_data(cfg, seed)?;
    let dir = cfg.run_dir(seed);
    let mut curves = Vec::new();
    for (kind, grid, file) in evaluation_attacks(cfg) {
        let count = match kind {
            AttackKind::Square(..) => cfg.square_samples.min(cfg.attack_samples),
            AttackKind::Pgd(_) => cfg.attack_samples,
        };
        if count == 0 {
            continue;
        }
        let curve = robustness_curve_refined(&model, &bundle.test.head(count), &kind, &grid, cfg.refine)?;
        write_curve_csv(&curve, dir.join(file))?;
        curves.push(curve);
    }
    Ok(curves)
}

/// Per-sample alignment on the test set.
pub fn align_run(cfg: &ExperimentConfig, seed: u64) -> Result<AlignmentReport> {
    let model = trained_model(cfg, seed)?;
    let bundle = build_data(cfg, seed)?;
    let report = evaluate_alignment(&model, &bundle.test)?;
    write_alignment_csv(&report, cfg.run_dir(seed).join(ALIGNMENT_FILE))?;
    Ok(report)
}

pub const GAN_HISTORY_HEADER: [&str; 6] = ["epoch", "d_loss", "g_loss", "val_total_loss", "d_accuracy", "mean_residual_norm"];

pub fn write_gan_history_csv(history: &GanHistory, path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path,
        &GAN_HISTORY_HEADER,
        history.records.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_num(r.d_loss),
                fmt_num(r.g_loss),
                fmt_num(r.val_total_loss),
                fmt_num(r.d_accuracy),
                fmt_num(r.mean_residual_norm),
            ]
        }),
    )
}

/// Outcome of a generator run on the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct GanSummary {
    pub sim_mean: f64,
    pub sim_std: f64,
    pub residual_norm_mean: f64,
}

/// Train the residual generator and write it, its manifest, the history,
/// per-sample similarities and the test set with generated residuals.
pub fn gan_run(cfg: &ExperimentConfig, seed: u64) -> Result<(ResidualGenerator, GanSummary)> {
    let dir = cfg.out.join(format!("gan_{}_seed{seed}", cfg.dataset));
    fs::create_dir_all(&dir)?;
    let bundle = build_data(cfg, seed)?;
    let (g, _, history) = train_residual_gan(bundle.train.source(), &bundle.val, &cfg.gan_config(seed))?;
    save_generator(&g, dir.join("generator.gam"))?;
    let mut entries = config_entries(cfg, seed);
    entries.extend([
        ("class_count", g.class_count.to_string()),
        ("clamp", cfg.clamp().map_or("none".into(), |(lo, hi)| format!("{},{}", fmt_num(lo), fmt_num(hi)))),
        ("best_epoch", history.best_epoch.map_or("none".into(), |e| e.to_string())),
    ]);
    write_manifest(dir.join("generator.txt"), &entries)?;
    write_gan_history_csv(&history, dir.join("gan_history.csv"))?;
    let sims = generator_similarities(&g, &bundle.test)?;
    let generated = attach_generated_deltas(&g, &bundle.test)?;
    let norms: Vec<f64> = generated
        .samples
        .iter()
        .map(|s| crate::array::norm2(s.delta_x.as_deref().unwrap_or(&[])))
        .collect();
    write_csv(
        dir.join("similarity.csv"),
        &["index", "sim", "residual_norm"],
        sims.iter().zip(&norms).enumerate().map(|(i, (s, n))| vec![i.to_string(), fmt_num(*s), fmt_num(*n)]),
    )?;
    save_dataset(&generated, dir.join("test_generated.gda"))?;
    let summary = GanSummary {
        sim_mean: crate::array::mean(&sims),
        sim_std: crate::array::std_dev(&sims),
        residual_norm_mean: crate::array::mean(&norms),
    };
    Ok((g, summary))
}

/// eps50 of a curve, NaN when accuracy never halves.
pub fn eps50_or_nan(curve: &RobustnessCurve) -> f64 {
    epsilon_50(curve).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = parse_config(
            "# spheres with the penalty\ndataset = spheres\nmethod = align_penalty  # L_alpha\nseeds = 1, 2,3\nhidden = 8,8\n\nlambda_alpha=0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.dataset, DatasetKind::Spheres);
        assert_eq!(cfg.method, Method::AlignPenalty);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.hidden, vec![8, 8]);
        assert_eq!(cfg.lambda_alpha, 0.2);
        assert_eq!(cfg.setup, "align_penalty");
        assert_eq!(cfg.layer_sizes(), vec![500, 8, 8, 2]);
    }

    #[test]
    fn dataset_defaults() {
        let sq = parse_config("dataset = squares32").unwrap();
        assert_eq!((sq.eps_train, sq.step, sq.batch_size), (0.2, 0.02, 12));
        assert_eq!(sq.clamp(), Some((-1.0, 1.0)));
        assert_eq!(sq.input_dim(), 1024);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(parse_config("dataset = spheres\nwidth = 3"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("method = pgd"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("dataset = spheres\nepochs = many"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("dataset = spheres\nepochs"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("dataset = spheres\nlr = 1\nlr = 2"), Err(Error::Config { line: 3, .. })));
        assert!(matches!(load_config("/nonexistent/x.cfg"), Err(Error::ConfigNotFound(_))));
    }

    #[test]
    fn tiny_spheres_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "dataset = spheres\ndim = 16\nper_epoch = 200\nval_count = 40\ntest_count = 40\nhidden = 8\nepochs = 2\nmethod = align_penalty\nattack_samples = 40\nsquare_samples = 4\nsquare_queries = 20\ngan_epochs = 1\ngan_hidden = 8\nout = {}\n",
            dir.path().display()
        );
        let cfg = parse_config(&text).unwrap();
        let (run, history) = train_run(&cfg, 3).unwrap();
        assert_eq!(history.records.len(), 2);
        assert!(run.join(MODEL_FILE).exists() && run.join(HISTORY_FILE).exists());
        let curves = attack_run(&cfg, 3).unwrap();
        assert_eq!(curves.len(), 3);
        let report = align_run(&cfg, 3).unwrap();
        assert_eq!(report.records.len(), 40);
        let (_, summary) = gan_run(&cfg, 3).unwrap();
        assert!(summary.sim_mean.is_finite());
        let files = gen_data(&cfg, 3).unwrap();
        assert_eq!(files.len(), 3);
    }
}
