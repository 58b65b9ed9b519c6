//! The analytic classifier for the concentric spheres: gradients point
//! straight along the residual, and the L2 robustness is half the gap
//! between the radii.

use gradalign::alignment::evaluate_alignment;
use gradalign::attacks::{default_grid, epsilon_50, robustness_curve_refined, AttackConfig, AttackKind, Norm};
use gradalign::data::sample_spheres;
use gradalign::RadialSpheresModel;

fn main() -> gradalign::Result<()> {
    let dim = 500;
    let model = RadialSpheresModel::new(dim);
    let test = sample_spheres(300, dim, 7)?;

    let report = evaluate_alignment(&model, &test)?;
    println!("alpha_dx {:.9} +- {:.1e}", report.alpha_dx_mean, report.alpha_dx_std);
    println!("alpha_x  {:.9}", report.alpha_x_mean);

    let l2 = AttackKind::Pgd(AttackConfig::pgd(Norm::Two, 0.0, 0.002).deterministic());
    let curve = robustness_curve_refined(&model, &test, &l2, &default_grid(0.005 * (dim as f64).sqrt()), 12)?;
    for (eps, acc) in &curve.points {
        println!("  eps {eps:.4}  accuracy {acc:.3}");
    }
    let eps50 = epsilon_50(&curve)?;
    println!("L2 eps50 {eps50:.4} (half the radius gap is 0.15), ratio to alignment {:.4}", eps50 / report.alpha_dx_mean);
    Ok(())
}
