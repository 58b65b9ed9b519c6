//! Per-sample alignment of a linear and an analytic model: the closest
//! other class, the cosine of the logit-gap gradient with the residual,
//! the plain input-gradient cosine, and the linearized robustness.

use gradalign::alignment::{alpha_delta_x, cosine_sim, evaluate_alignment, tilde_c, write_alignment_csv};
use gradalign::data::sample_spheres;
use gradalign::{LinearModel, RadialSpheresModel};

fn main() -> gradalign::Result<()> {
    println!("cos((1,0), (1,1)) = {:.7}", cosine_sim(&[1.0, 0.0], &[1.0, 1.0]));

    let three = LinearModel::from_columns(
        &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
        vec![0.0, 0.1, 0.0],
    )?;
    println!("closest rival of class 0 at (1, 0.5): {}", tilde_c(&three, &[1.0, 0.5], 0)?);

    let ds = sample_spheres(200, 50, 4)?;
    let linear = LinearModel::from_columns(&[vec![0.1; 50], vec![-0.1; 50]], vec![0.0, 0.0])?;
    let radial = RadialSpheresModel::new(50);
    println!("first sample: linear alpha {:.3}, radial alpha {:.3}",
        alpha_delta_x(&linear, &ds.samples[0])?, alpha_delta_x(&radial, &ds.samples[0])?);

    let report = evaluate_alignment(&radial, &ds)?;
    println!("radial: alpha_dx {:.6} +- {:.1e}, alpha_x {:.6}", report.alpha_dx_mean, report.alpha_dx_std, report.alpha_x_mean);
    let report = evaluate_alignment(&linear, &ds)?;
    println!("linear: alpha_dx {:.3} +- {:.3}, alpha_x {:.3}", report.alpha_dx_mean, report.alpha_dx_std, report.alpha_x_mean);

    let path = std::env::temp_dir().join("gradalign_alignment.csv");
    write_alignment_csv(&report, &path)?;
    println!("records in {}", path.display());
    Ok(())
}
