//! Central-difference gradient checking.

use crate::mlp::Mlp;
use crate::model::Model;

/// Central differences of a scalar function, one coordinate at a time.
pub fn central_difference<F>(f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = point.to_vec();
    (0..point.len())
        .map(|i| {
            probe[i] = point[i] + step;
            let up = f(&probe);
            probe[i] = point[i] - step;
            let down = f(&probe);
            probe[i] = point[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Central differences of `loss` over every parameter of `model`, in the
/// order of `Mlp::param_slices_mut` (each layer's weight, then its bias).
pub fn param_central_difference<F>(model: &Mlp, loss: F, step: f64) -> Vec<f64>
where
    F: Fn(&Mlp) -> f64,
{
    let mut probe = model.clone();
    let sizes: Vec<usize> = probe.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut out = Vec::with_capacity(sizes.iter().sum());
    for (k, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.param_slices_mut()[k][i];
            probe.param_slices_mut()[k][i] = orig + step;
            let up = loss(&probe);
            probe.param_slices_mut()[k][i] = orig - step;
            let down = loss(&probe);
            probe.param_slices_mut()[k][i] = orig;
            out.push((up - down) / (2.0 * step));
        }
    }
    out
}

/// Worst per-coordinate relative error between two gradients.
///
/// Each coordinate is compared against `max(|a_i|, |b_i|, floor)`, with
/// `floor = 1e-7 * max(1, |a|_inf)` so that coordinates that are zero
/// analytically do not blow up on round-off.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-7 * scale;
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Compare `model.input_gradient(x, coeffs)` with central differences of
/// `<coeffs, logit(x)>` and report the worst relative error.
pub fn finite_diff_check(model: &dyn Model, x: &[f64], coeffs: &[f64], step: f64) -> f64 {
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = model.input_gradient(x, coeffs);
    let numeric = central_difference(
        |p| model.logits(p).iter().zip(coeffs).map(|(l, c)| l * c).sum(),
        x,
        step,
    );
    max_relative_error(&analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Mlp;
    use crate::model::LinearModel;
    use crate::rng::Rng;

    #[test]
    fn quadratic_central_difference() {
        let g = central_difference(|v| v[0] * v[0] + 3.0 * v[0] * v[1], &[1.0, 2.0], 1e-5);
        assert!((g[0] - 8.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn linear_model_is_exact() {
        let m = LinearModel::from_columns(&[vec![0.3, -1.2, 2.0], vec![1.0, 0.5, -0.25]], vec![0.1, -0.4]).unwrap();
        let err = finite_diff_check(&m, &[0.2, -0.7, 1.1], &[1.0, -1.0], 1e-4);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn random_mlp_within_tolerance() {
        let mut rng = Rng::new(11);
        let m = Mlp::new(&[2, 8, 2], &mut rng).unwrap();
        let x = [0.37, -0.81];
        let err = finite_diff_check(&m, &x, &[1.0, -1.0], 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn huge_step_is_detected() {
        // Radial model is nonlinear; a unit step is far outside the linear regime.
        let m = crate::model::RadialSpheresModel::new(3);
        let err = finite_diff_check(&m, &[0.3, 0.2, -0.1], &[0.0, 1.0], 1.0);
        assert!(err > 1e-2, "{err}");
    }
}
