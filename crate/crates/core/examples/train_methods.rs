//! Train the same small spheres classifier three ways (plain cross
//! entropy, PGD adversarial training, and the alignment penalty) and
//! compare alignment and robustness.
//!
//! ```text
//! cargo run --release --example train_methods -- [dim] [epochs]
//! ```

use gradalign::alignment::evaluate_alignment;
use gradalign::attacks::{default_grid, epsilon_50, robustness_curve_refined, AttackConfig, AttackKind, Norm};
use gradalign::data::{sample_spheres, SpheresStream};
use gradalign::training::{train, Method, TrainConfig};
use gradalign::{Mlp, Rng};

fn main() -> gradalign::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let dim = args.first().copied().unwrap_or(100);
    let epochs = args.get(1).copied().unwrap_or(5);
    // The radial L-inf budget that reaches the boundary shrinks like 1/sqrt(n).
    let eps = 0.1 / (dim as f64).sqrt();

    let source = SpheresStream { dim, per_epoch: 10_000, seed: 1 };
    let val = sample_spheres(200, dim, 2)?;
    let test = sample_spheres(300, dim, 3)?;

    for method in [Method::Baseline, Method::Pgd, Method::AlignPenalty] {
        let model = Mlp::new(&[dim, 200, 200, 2], &mut Rng::new(1))?;
        let mut cfg = TrainConfig::new(method, eps, 0.4 * eps);
        cfg.epochs = epochs;
        cfg.lr = 1e-3;
        cfg.lambda_alpha = 1.0;
        if let Some(p) = cfg.pgd.as_mut() {
            p.iterations = 10;
        }
        let (model, history) = train(model, &source, &val, &cfg)?;
        for r in &history.records {
            println!("  {method} epoch {} loss {:.4} val acc {:.3}", r.epoch, r.train_loss, r.val_accuracy);
        }
        let alpha = evaluate_alignment(&model, &test)?.alpha_dx_mean;
        let attack = AttackKind::Pgd(AttackConfig::pgd(Norm::Inf, 0.0, 0.4 * eps));
        let eps50 = epsilon_50(&robustness_curve_refined(&model, &test, &attack, &default_grid(eps), 8)?)?;
        println!("{method}: best epoch {:?}, alpha_dx {alpha:.3}, L-inf eps50 {eps50:.4}", history.best_epoch);
    }
    Ok(())
}
