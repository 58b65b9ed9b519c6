//! Command-line front end. Every subcommand takes `--config`, `--seed` and
//! `--out`; errors become a single `error:` line on stderr.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiment::{
    align_run, attack_run, eps50_or_nan, gan_run, gen_data, load_config, train_run, ExperimentConfig,
};
use crate::report::write_report;
use crate::table::fmt_num;
use crate::theory::{theorem1_sweep, write_sweep_csv};

#[derive(Debug, Parser)]
#[command(name = "gradalign", version, about = "Gradient alignment and adversarial robustness experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (flat key = value file).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/val/test datasets and manifests.
    GenData(Common),
    /// Train one model per seed.
    Train(Common),
    /// Robustness curves for trained models.
    Attack(Common),
    /// Per-sample alignment of trained models on the test set.
    Align(Common),
    /// Train the residual generator and validate it.
    Gan(Common),
    /// Randomized exactness sweep on linear models.
    VerifyTheory {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
    },
    /// Results and correlation tables plus curve plots from run directories.
    Report(Common),
}

fn config(common: &Common) -> Result<(ExperimentConfig, Vec<u64>)> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--config is required for this subcommand".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    let seeds = common.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    Ok((cfg, seeds))
}

/// Execute a parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let (cfg, seeds) = config(&common)?;
            for seed in seeds {
                for path in gen_data(&cfg, seed)? {
                    println!("{}", path.display());
                }
            }
        }
        Command::Train(common) => {
            let (cfg, seeds) = config(&common)?;
            for seed in seeds {
                let (dir, history) = train_run(&cfg, seed)?;
                let best = history.best_epoch.map_or("none".into(), |e| e.to_string());
                println!("{} best_epoch={best}", dir.display());
            }
        }
        Command::Attack(common) => {
            let (cfg, seeds) = config(&common)?;
            for seed in seeds {
                for curve in attack_run(&cfg, seed)? {
                    println!("seed={seed} {} eps50={}", curve.attack, fmt_num(eps50_or_nan(&curve)));
                }
            }
        }
        Command::Align(common) => {
            let (cfg, seeds) = config(&common)?;
            for seed in seeds {
                let r = align_run(&cfg, seed)?;
                println!(
                    "seed={seed} alpha_dx={}+-{} alpha_x={}+-{}",
                    fmt_num(r.alpha_dx_mean),
                    fmt_num(r.alpha_dx_std),
                    fmt_num(r.alpha_x_mean),
                    fmt_num(r.alpha_x_std)
                );
            }
        }
        Command::Gan(common) => {
            let (cfg, seeds) = config(&common)?;
            for seed in seeds {
                let (_, s) = gan_run(&cfg, seed)?;
                println!(
                    "seed={seed} sim={}+-{} residual_norm={}",
                    fmt_num(s.sim_mean),
                    fmt_num(s.sim_std),
                    fmt_num(s.residual_norm_mean)
                );
            }
        }
        Command::VerifyTheory {
            common,
            trials,
            dim,
            classes,
        } => {
            let out = match (&common.out, &common.config) {
                (Some(out), _) => Some(out.clone()),
                (None, Some(path)) => Some(load_config(path)?.out),
                (None, None) => None,
            };
            let sweep = theorem1_sweep(trials, dim, classes, common.seed.unwrap_or(0))?;
            println!("max residual {}", fmt_num(sweep.max_residual));
            println!("max relative residual {}", fmt_num(sweep.max_relative_residual));
            println!("mean residual {}", fmt_num(sweep.mean_residual));
            println!("filtered fraction {}", fmt_num(sweep.filtered_fraction()));
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                write_sweep_csv(&sweep, out.join("theorem1_sweep.csv"))?;
            }
        }
        Command::Report(common) => {
            let root = match (&common.out, &common.config) {
                (Some(out), _) => out.clone(),
                (None, Some(path)) => load_config(path)?.out,
                (None, None) => PathBuf::from("runs"),
            };
            let table = write_report(&root)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} runs, {} groups -> {}", table.rows.len(), table.aggregates.len(), root.join("report").display());
        }
    }
    Ok(())
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: bad arguments"));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
