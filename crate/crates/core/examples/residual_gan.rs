//! Train a residual generator on low-dimensional spheres and compare its
//! residuals with the analytic ones.

use gradalign::data::{sample_spheres, SpheresStream};
use gradalign::gan::{generate_delta, train_residual_gan, validate_generator, GanConfig};

fn main() -> gradalign::Result<()> {
    let dim = 50;
    let source = SpheresStream { dim, per_epoch: 20_000, seed: 1 };
    let val = sample_spheres(200, dim, 2)?;
    let test = sample_spheres(300, dim, 3)?;
    let cfg = GanConfig {
        epochs: 25,
        lr: 3e-4,
        generator_hidden: vec![256, 256],
        discriminator_hidden: vec![256, 256],
        generator_output_scale: 0.01,
        seed: 1,
        ..GanConfig::default()
    };
    let (g, _, history) = train_residual_gan(&source, &val, &cfg)?;
    for r in &history.records {
        println!(
            "epoch {:2} d {:.4} g {:.4} val {:.4} d acc {:.3} |residual| {:.3}",
            r.epoch, r.d_loss, r.g_loss, r.val_total_loss, r.d_accuracy, r.mean_residual_norm
        );
    }
    let (sim, sd) = validate_generator(&g, &test)?;
    println!("kept epoch {:?}; cos(residual, generated) {sim:.3} +- {sd:.3}", history.best_epoch);
    for s in test.samples.iter().take(4) {
        let d = generate_delta(&g, &s.x, 1 - s.y)?;
        println!("  class {} -> |generated| {:.3}", s.y, d.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok(())
}
