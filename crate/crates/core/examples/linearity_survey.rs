//! Linearized robustness against the robustness found by a PGD bisection,
//! sample by sample. Exact models sit on the identity line.

use gradalign::data::sample_spheres;
use gradalign::theory::{linearity_survey, max_identity_gap, mean_relative_gap, write_scatter_csv, BisectionConfig};
use gradalign::training::{train, Method, TrainConfig};
use gradalign::{LinearModel, Mlp, Model, RadialSpheresModel, Rng};

fn report(name: &str, model: &dyn Model, dim: usize) -> gradalign::Result<()> {
    let ds = sample_spheres(60, dim, 5)?;
    let pairs = linearity_survey(model, &ds, 60, &BisectionConfig::default())?;
    println!("{name:8} max gap {:.2e}, mean relative gap {:.3}", max_identity_gap(&pairs), mean_relative_gap(&pairs));
    for (lemma, attack) in pairs.iter().take(3) {
        println!("         {lemma:+.4} vs {attack:+.4}");
    }
    write_scatter_csv(&pairs, std::env::temp_dir().join(format!("gradalign_scatter_{name}.csv")))
}

fn main() -> gradalign::Result<()> {
    let dim = 20;
    let linear = LinearModel::from_columns(&[vec![0.3; dim], vec![-0.2; dim]], vec![0.1, 0.0])?;
    report("linear", &linear, dim)?;
    report("radial", &RadialSpheresModel::new(dim), dim)?;

    let source = sample_spheres(2000, dim, 1)?;
    let val = sample_spheres(100, dim, 2)?;
    let mut cfg = TrainConfig::new(Method::Baseline, 0.02, 0.008);
    cfg.epochs = 5;
    cfg.lr = 1e-3;
    let (mlp, _) = train(Mlp::new(&[dim, 64, 64, 2], &mut Rng::new(1))?, &source, &val, &cfg)?;
    report("mlp", &mlp, dim)
}
