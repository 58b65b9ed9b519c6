//! Compare analytic gradients of a small MLP with central differences:
//! input gradients, cross-entropy parameter gradients, and the parameter
//! gradient of an input-gradient penalty (double backpropagation).

use gradalign::gradcheck::{finite_diff_check, max_relative_error, param_central_difference};
use gradalign::mlp::{param_gradient, CosineToTarget, InputGradientTerm};
use gradalign::{Mlp, Rng};
use ndarray::{array, Array2};

fn main() -> gradalign::Result<()> {
    let mut rng = Rng::new(3);
    let m = Mlp::new(&[4, 6, 6, 2], &mut rng)?;
    let xs = Array2::from_shape_fn((2, 4), |_| rng.gaussian());
    let labels = [0, 1];

    let err = finite_diff_check(&m, &xs.row(0).to_vec(), &[1.0, -1.0], 1e-6);
    println!("input gradient      {err:.1e}");

    let (_, grad) = param_gradient(&m, xs.view(), &labels, 1.0, None)?;
    let numeric = param_central_difference(&m, |p| param_gradient(p, xs.view(), &labels, 1.0, None).unwrap().0, 1e-6);
    println!("parameter gradient  {:.1e}", max_relative_error(&grad.flatten(), &numeric));

    // Reward alignment of grad(logit_1 - logit_0) with fixed targets.
    let coeffs = array![[-1.0, 1.0], [1.0, -1.0]];
    let targets = Array2::from_shape_fn((2, 4), |_| rng.gaussian());
    let cosine = CosineToTarget { targets: targets.view() };
    let loss = |p: &Mlp| {
        let term = InputGradientTerm { coeffs: coeffs.view(), functional: &cosine, weight: -0.1 };
        param_gradient(p, xs.view(), &labels, 1.0, Some(&term)).unwrap()
    };
    let numeric = param_central_difference(&m, |p| loss(p).0, 1e-6);
    println!("penalty gradient    {:.1e}", max_relative_error(&loss(&m).1.flatten(), &numeric));
    Ok(())
}
