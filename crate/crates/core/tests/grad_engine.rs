//! Finite-difference checks of the MLP gradients, including the
//! input-gradient penalty differentiated through a second backward pass.

use gradalign::gradcheck::{finite_diff_check, max_relative_error, param_central_difference};
use gradalign::mlp::{param_gradient, CosineToTarget, InputGradientTerm, Layer, SquaredNorm};
use gradalign::{Mlp, Model, Rng};
use ndarray::{Array1, Array2};

const PROBES: usize = 100;
const STEP: f64 = 1e-6;
/// Probes whose hidden pre-activations come this close to zero are redrawn:
/// a central difference straddling a ReLU kink measures nothing useful.
const KINK_MARGIN: f64 = 1e-3;

fn random_mlp(rng: &mut Rng, classes: usize) -> Mlp {
    let n = 3 + rng.below(4);
    let hidden = 4 + rng.below(5);
    let mut m = Mlp::new(&[n, hidden, hidden, classes], rng).unwrap();
    for layer in m.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
    }
    m
}

fn random_batch(rng: &mut Rng, rows: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, n), |_| rng.gaussian())
}

fn clear_of_kinks(m: &Mlp, xs: &Array2<f64>) -> bool {
    m.tape(xs.view()).min_abs_pre_activation() > KINK_MARGIN
}

fn param_differences(m: &Mlp, loss: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    param_central_difference(m, loss, STEP)
}

#[test]
fn input_gradients_match_differences() {
    let mut rng = Rng::new(11);
    let mut checked = 0;
    while checked < PROBES {
        let classes = 2 + rng.below(3);
        let m = random_mlp(&mut rng, classes);
        let x = rng.gaussian_vec(m.input_dim());
        let xs = Array2::from_shape_vec((1, x.len()), x.clone()).unwrap();
        if !clear_of_kinks(&m, &xs) {
            continue;
        }
        let coeffs = rng.gaussian_vec(classes);
        let err = finite_diff_check(&m, &x, &coeffs, STEP);
        assert!(err < 1e-4, "probe {checked}: relative error {err}");
        checked += 1;
    }
}

#[test]
fn cross_entropy_parameter_gradients_match_differences() {
    let mut rng = Rng::new(12);
    let mut checked = 0;
    while checked < PROBES {
        let classes = 2 + rng.below(3);
        let m = random_mlp(&mut rng, classes);
        let xs = random_batch(&mut rng, 3, m.input_dim());
        if !clear_of_kinks(&m, &xs) {
            continue;
        }
        let labels: Vec<usize> = (0..3).map(|_| rng.below(classes)).collect();
        let (_, grad) = param_gradient(&m, xs.view(), &labels, 1.0, None).unwrap();
        let numeric = param_differences(&m, |p| param_gradient(p, xs.view(), &labels, 1.0, None).unwrap().0);
        let err = max_relative_error(&grad.flatten(), &numeric);
        assert!(err < 1e-4, "probe {checked}: relative error {err}");
        checked += 1;
    }
}

/// Logit-gap coefficients `e_c - e_y` with `c` a random other class.
fn gap_coeffs(rng: &mut Rng, labels: &[usize], classes: usize) -> Array2<f64> {
    let mut c = Array2::zeros((labels.len(), classes));
    for (b, &y) in labels.iter().enumerate() {
        let other = (y + 1 + rng.below(classes - 1)) % classes;
        c[[b, other]] = 1.0;
        c[[b, y]] = -1.0;
    }
    c
}

#[test]
fn penalty_gradients_match_differences() {
    let mut rng = Rng::new(13);
    let mut checked = 0;
    while checked < PROBES {
        // Alternate two-class (fused path) and multiclass models.
        let classes = if checked % 2 == 0 { 2 } else { 3 + rng.below(2) };
        let m = random_mlp(&mut rng, classes);
        let xs = random_batch(&mut rng, 3, m.input_dim());
        if !clear_of_kinks(&m, &xs) {
            continue;
        }
        let labels: Vec<usize> = (0..3).map(|_| rng.below(classes)).collect();
        let coeffs = gap_coeffs(&mut rng, &labels, classes);
        let targets = random_batch(&mut rng, 3, m.input_dim());
        let cosine = CosineToTarget { targets: targets.view() };
        let weight = -0.1 - rng.next_f64();
        let loss = |p: &Mlp| {
            let term = InputGradientTerm {
                coeffs: coeffs.view(),
                functional: &cosine,
                weight,
            };
            param_gradient(p, xs.view(), &labels, 1.0, Some(&term)).unwrap()
        };
        let (_, grad) = loss(&m);
        let numeric = param_differences(&m, |p| loss(p).0);
        let err = max_relative_error(&grad.flatten(), &numeric);
        assert!(err < 1e-3, "probe {checked} ({classes} classes): relative error {err}");
        checked += 1;
    }
}

fn single_layer(rng: &mut Rng, n: usize, classes: usize) -> Mlp {
    Mlp::from_layers(vec![Layer {
        weight: Array2::from_shape_fn((classes, n), |_| rng.gaussian()),
        bias: Array1::from_shape_fn(classes, |_| rng.gaussian()),
    }])
    .unwrap()
}

#[test]
fn cross_entropy_gradient_has_closed_form() {
    let mut rng = Rng::new(14);
    let (n, classes, rows) = (5, 3, 4);
    let m = single_layer(&mut rng, n, classes);
    let xs = random_batch(&mut rng, rows, n);
    let labels = vec![0, 2, 1, 2];
    let (loss, grad) = param_gradient(&m, xs.view(), &labels, 1.0, None).unwrap();

    // dW = (softmax - onehot)^T X / B, db = mean(softmax - onehot).
    let w = &m.layers()[0].weight;
    let b = &m.layers()[0].bias;
    let mut dw = Array2::<f64>::zeros((classes, n));
    let mut db = Array1::<f64>::zeros(classes);
    let mut expected_loss = 0.0;
    for r in 0..rows {
        let z: Vec<f64> = (0..classes).map(|c| w.row(c).dot(&xs.row(r)) + b[c]).collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
        expected_loss += -(z[labels[r]] - zmax - denom.ln());
        for c in 0..classes {
            let p = (z[c] - zmax).exp() / denom;
            let e = p - if c == labels[r] { 1.0 } else { 0.0 };
            db[c] += e / rows as f64;
            for i in 0..n {
                dw[[c, i]] += e * xs[[r, i]] / rows as f64;
            }
        }
    }
    assert!((loss - expected_loss / rows as f64).abs() < 1e-12);
    let flat = grad.flatten();
    let expected: Vec<f64> = dw.iter().chain(db.iter()).copied().collect();
    for (a, e) in flat.iter().zip(&expected) {
        assert!((a - e).abs() < 1e-12, "{a} vs {e}");
    }
}

#[test]
fn squared_logit_gradient_norm_has_closed_form() {
    // For a single linear layer grad_x logit_0 = W[0, :], so the penalty
    // weight * |W[0, :]|^2 adds 2 weight W[0, :] to the gradient of row 0.
    let mut rng = Rng::new(15);
    let (n, classes, rows) = (6, 2, 5);
    let m = single_layer(&mut rng, n, classes);
    let xs = random_batch(&mut rng, rows, n);
    let labels = vec![0, 1, 1, 0, 1];
    let mut e0 = Array2::zeros((rows, classes));
    e0.column_mut(0).fill(1.0);
    let weight = 0.7;
    let term = InputGradientTerm {
        coeffs: e0.view(),
        functional: &SquaredNorm,
        weight,
    };
    let (with, g_with) = param_gradient(&m, xs.view(), &labels, 1.0, Some(&term)).unwrap();
    let (without, g_without) = param_gradient(&m, xs.view(), &labels, 1.0, None).unwrap();
    let w0 = m.layers()[0].weight.row(0).to_owned();
    assert!((with - without - weight * w0.dot(&w0)).abs() < 1e-12);
    let diff: Vec<f64> = g_with.flatten().iter().zip(g_without.flatten()).map(|(a, b)| a - b).collect();
    for (k, d) in diff.iter().enumerate() {
        let expected = if k < n { 2.0 * weight * w0[k] } else { 0.0 };
        assert!((d - expected).abs() < 1e-12, "parameter {k}: {d} vs {expected}");
    }
}

#[test]
fn squared_norm_functional_through_hidden_layers() {
    let mut rng = Rng::new(16);
    let mut checked = 0;
    while checked < 20 {
        let m = random_mlp(&mut rng, 2);
        let xs = random_batch(&mut rng, 2, m.input_dim());
        if !clear_of_kinks(&m, &xs) {
            continue;
        }
        let mut e0 = Array2::zeros((2, 2));
        e0.column_mut(0).fill(1.0);
        let loss = |p: &Mlp| {
            let term = InputGradientTerm {
                coeffs: e0.view(),
                functional: &SquaredNorm,
                weight: 0.5,
            };
            param_gradient(p, xs.view(), &[0, 1], 0.0, Some(&term)).unwrap()
        };
        let numeric = param_differences(&m, |p| loss(p).0);
        let err = max_relative_error(&loss(&m).1.flatten(), &numeric);
        assert!(err < 1e-3, "relative error {err}");
        // The value itself is |grad_x logit_0|^2 averaged over the batch.
        let direct: f64 = (0..2)
            .map(|r| {
                let g = m.input_gradient(&xs.row(r).to_vec(), &[1.0, 0.0]);
                g.iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            / 2.0;
        assert!((loss(&m).0 - 0.5 * direct).abs() < 1e-12);
        checked += 1;
    }
}
