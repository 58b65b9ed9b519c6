//! ReLU multilayer perceptrons with a batched reverse-mode tape.
//!
//! A forward pass over a batch (one sample per row) is recorded in a
//! [`Tape`]. The tape supports three sweeps:
//!
//! * [`Tape::backward`]: ordinary reverse sweep from a logit adjoint, giving
//!   input adjoints and parameter gradients.
//! * [`Tape::input_gradient`]: reverse sweep for fixed logit coefficients,
//!   keeping the per-layer adjoints so the sweep itself can be differentiated.
//! * [`Tape::input_gradient_vjp`]: the second (double-backprop) pass. Given
//!   the derivative of a scalar functional with respect to the input
//!   gradient, it returns the derivative with respect to every weight.
//!
//! ReLU has derivative 0 at 0 and second derivative 0 everywhere, so the
//! input gradient of a fixed logit combination is multilinear in the weights
//! and independent of the biases.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Fully connected network, ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`) and zero biases.
    ///
    /// `sizes` lists every width including input and output, so
    /// `[500, 1000, 1000, 2]` is the two-hidden-layer Spheres classifier.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight = Array2::from_shape_fn((fan_out, fan_in), |_| rng.uniform(-bound, bound));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch {
                    expected: vec![pair[0].outputs()],
                    got: vec![pair[1].inputs()],
                });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::ShapeMismatch {
                    expected: vec![layer.outputs()],
                    got: vec![layer.bias.len()],
                });
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("MLP parameters".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Multiply the output layer by `factor` (used to start generators near zero).
    pub fn scale_output(&mut self, factor: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight.mapv_inplace(|w| w * factor);
        last.bias.mapv_inplace(|b| b * factor);
    }

    /// Flat mutable views over all parameters, in layer order (weight, bias).
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Record a forward pass over `xs` (one sample per row).
    pub fn tape(&self, xs: ArrayView2<'_, f64>) -> Tape<'_> {
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(xs.to_owned());
        let last = self.layers.len() - 1;
        let mut logits = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = activations[l].dot(&layer.weight.t());
            z += &layer.bias;
            if l == last {
                logits = Some(z);
            } else {
                z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
                activations.push(z);
            }
        }
        Tape {
            model: self,
            activations,
            logits: logits.expect("at least one layer"),
        }
    }

    /// Logits for a batch without keeping the tape.
    pub fn forward_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = xs.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            if l != last {
                z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
            }
            h = z;
        }
        h
    }
}

/// Gradient of a scalar with respect to every MLP parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<Layer>,
}

impl MlpGrad {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &MlpGrad, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(factor, &b.weight);
            a.bias.scaled_add(factor, &b.bias);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.mapv_inplace(|v| v * factor);
            l.bias.mapv_inplace(|v| v * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Per-layer adjoints of one input-gradient sweep.
///
/// `pre_activation[l]` is the adjoint of layer `l`'s pre-activation
/// (`l = 0` is the first layer); `input` is the resulting input gradient.
#[derive(Debug, Clone)]
pub struct InputSweep {
    pub pre_activation: Vec<Array2<f64>>,
    pub input: Array2<f64>,
}

/// Result of an ordinary reverse sweep.
#[derive(Debug, Clone)]
pub struct Backward {
    pub input: Option<Array2<f64>>,
    pub params: Option<MlpGrad>,
}

/// Recorded forward pass of an [`Mlp`] over a batch.
#[derive(Debug, Clone)]
pub struct Tape<'m> {
    model: &'m Mlp,
    /// Input to each layer: `activations[0]` is the batch itself, later
    /// entries are post-ReLU hidden states.
    activations: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn relu_mask_inplace(adjoint: &mut Array2<f64>, hidden: &Array2<f64>) {
    Zip::from(adjoint).and(hidden).for_each(|a, &h| {
        if h <= 0.0 {
            *a = 0.0;
        }
    });
}

impl<'m> Tape<'m> {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn into_logits(self) -> Array2<f64> {
        self.logits
    }

    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }

    /// Reverse sweep from `logit_adjoint` (batch x outputs).
    pub fn backward(&self, logit_adjoint: ArrayView2<'_, f64>, want_input: bool, want_params: bool) -> Backward {
        let layers = &self.model.layers;
        let mut params = want_params.then(|| MlpGrad::zeros_like(self.model));
        let mut g = logit_adjoint.to_owned();
        let mut input = None;
        for l in (0..layers.len()).rev() {
            if let Some(p) = params.as_mut() {
                p.layers[l].weight = standard(g.t().dot(&self.activations[l]));
                p.layers[l].bias = g.sum_axis(Axis(0));
            }
            if l == 0 {
                if want_input {
                    input = Some(g.dot(&layers[0].weight));
                }
                break;
            }
            let mut a = g.dot(&layers[l].weight);
            relu_mask_inplace(&mut a, &self.activations[l]);
            g = a;
        }
        Backward { input, params }
    }

    /// Gradient of `sum_c coeffs[b, c] * logit[b, c]` with respect to each
    /// input row, keeping the adjoints needed by [`Self::input_gradient_vjp`].
    pub fn input_gradient(&self, coeffs: ArrayView2<'_, f64>) -> InputSweep {
        let layers = &self.model.layers;
        let mut pre = vec![Array2::zeros((0, 0)); layers.len()];
        let mut g = coeffs.to_owned();
        for l in (1..layers.len()).rev() {
            let mut a = g.dot(&layers[l].weight);
            relu_mask_inplace(&mut a, &self.activations[l]);
            pre[l] = std::mem::replace(&mut g, a);
        }
        let input = g.dot(&layers[0].weight);
        pre[0] = g;
        InputSweep {
            pre_activation: pre,
            input,
        }
    }

    /// Double-backprop pass.
    ///
    /// `upstream[b]` is the derivative of a scalar functional with respect to
    /// `sweep.input[b]`. Returns that functional's gradient with respect to
    /// the parameters (bias entries are exactly zero: the input gradient
    /// does not depend on biases away from ReLU kinks).
    pub fn input_gradient_vjp(&self, sweep: &InputSweep, upstream: ArrayView2<'_, f64>) -> MlpGrad {
        let layers = &self.model.layers;
        let mut grad = MlpGrad::zeros_like(self.model);
        // Tangent of the input-gradient sweep, pushed forward through the
        // same ReLU masks.
        let mut t = upstream.to_owned();
        for l in 0..layers.len() {
            grad.layers[l].weight = standard(sweep.pre_activation[l].t().dot(&t));
            if l + 1 < layers.len() {
                let mut s = t.dot(&layers[l].weight.t());
                relu_mask_inplace(&mut s, &self.activations[l + 1]);
                t = s;
            }
        }
        grad
    }

    /// Cross-entropy backward plus double-backprop pass in one sweep, for
    /// the case where the logit adjoint rows are `row_scales[b] * coeffs[b]`.
    ///
    /// Both contributions share the pre-activation adjoints of the sweep, so
    /// each weight gradient is a single product
    /// `G_l^T (diag(row_scales) H_l + T_l)`.
    pub fn fused_binary_gradient(
        &self,
        sweep: &InputSweep,
        row_scales: &Array1<f64>,
        upstream: ArrayView2<'_, f64>,
    ) -> MlpGrad {
        let layers = &self.model.layers;
        let mut grad = MlpGrad::zeros_like(self.model);
        let column = row_scales.view().insert_axis(Axis(1));
        let mut t = upstream.to_owned();
        for l in 0..layers.len() {
            let mut combined = &self.activations[l] * &column;
            combined += &t;
            let pre = &sweep.pre_activation[l];
            grad.layers[l].weight = standard(pre.t().dot(&combined));
            grad.layers[l].bias = pre.t().dot(row_scales);
            if l + 1 < layers.len() {
                let mut s = t.dot(&layers[l].weight.t());
                relu_mask_inplace(&mut s, &self.activations[l + 1]);
                t = s;
            }
        }
        grad
    }

    /// Smallest |pre-activation| over all hidden units and samples; used to
    /// reject finite-difference probes that sit on a ReLU kink.
    pub fn min_abs_pre_activation(&self) -> f64 {
        let layers = &self.model.layers;
        let mut best = f64::INFINITY;
        for l in 0..layers.len() - 1 {
            let mut z = self.activations[l].dot(&layers[l].weight.t());
            z += &layers[l].bias;
            best = z.iter().fold(best, |m, v| m.min(v.abs()));
        }
        best
    }
}

/// For two-class models every logit adjoint row is (close to) antisymmetric,
/// so when the penalty coefficients are antisymmetric too the two are
/// proportional row by row. Returns the per-row factors in that case.
fn binary_row_scales(adjoint: ArrayView2<'_, f64>, coeffs: ArrayView2<'_, f64>) -> Option<Array1<f64>> {
    if adjoint.ncols() != 2 || coeffs.ncols() != 2 {
        return None;
    }
    let mut scales = Array1::zeros(adjoint.nrows());
    for (b, (a, c)) in adjoint.rows().into_iter().zip(coeffs.rows()).enumerate() {
        if c[0] != -c[1] || c[1] == 0.0 {
            return None;
        }
        scales[b] = (a[1] - a[0]) / (c[1] - c[0]);
    }
    Some(scales)
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Mean softmax cross-entropy and its adjoint with respect to the logits.
pub fn cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let batch = logits.nrows();
    let mut adjoint = softmax_rows(logits);
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        let row = logits.row(b);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        adjoint[[b, y]] -= 1.0;
    }
    let inv = 1.0 / batch as f64;
    adjoint.mapv_inplace(|v| v * inv);
    (loss * inv, adjoint)
}

/// Scalar functional of one sample's input gradient.
pub trait GradientFunctional {
    /// Value and derivative with respect to `input_grad` for sample `row`.
    fn eval(&self, row: usize, input_grad: ArrayView1<'_, f64>) -> (f64, Array1<f64>);
}

/// `cos(target[row], u)` with the 1e-12 norm guard used by the metrics.
pub struct CosineToTarget<'a> {
    pub targets: ArrayView2<'a, f64>,
}

impl GradientFunctional for CosineToTarget<'_> {
    fn eval(&self, row: usize, u: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        let d = self.targets.row(row);
        let nd = d.dot(&d).sqrt();
        let nu = u.dot(&u).sqrt();
        if nd < 1e-12 || nu < 1e-12 {
            return (0.0, Array1::zeros(u.len()));
        }
        let inner = d.dot(&u);
        let denom = nd * nu + 1e-12;
        let value = inner / denom;
        // d/du [<d,u> / (|d||u| + eps)]
        let coef_u = -inner * nd / (denom * denom * nu);
        let mut grad = d.mapv(|v| v / denom);
        grad.scaled_add(coef_u, &u);
        (value, grad)
    }
}

/// `|u|^2`
pub struct SquaredNorm;

impl GradientFunctional for SquaredNorm {
    fn eval(&self, _row: usize, u: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        (u.dot(&u), u.mapv(|v| 2.0 * v))
    }
}

/// Penalty on an input gradient of fixed logit coefficients.
pub struct InputGradientTerm<'a> {
    /// batch x classes coefficients selecting the logit combination.
    pub coeffs: ArrayView2<'a, f64>,
    pub functional: &'a dyn GradientFunctional,
    /// Multiplies the batch mean of the functional.
    pub weight: f64,
}

/// Loss value and parameter gradient of
/// `ce_weight * mean CE + term.weight * mean_b functional(grad_x <coeffs_b, logit(x_b)>)`.
///
/// When a term is present the gradient includes the double-backprop
/// contribution through the input gradient.
pub fn param_gradient(
    model: &Mlp,
    xs: ArrayView2<'_, f64>,
    labels: &[usize],
    ce_weight: f64,
    term: Option<&InputGradientTerm<'_>>,
) -> Result<(f64, MlpGrad)> {
    if xs.ncols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![xs.nrows(), model.input_dim()],
            got: xs.shape().to_vec(),
        });
    }
    if labels.len() != xs.nrows() || labels.iter().any(|&y| y >= model.output_dim()) {
        return Err(Error::InvalidArgument("labels do not match the batch".into()));
    }
    let tape = model.tape(xs);
    let (ce, mut adjoint) = cross_entropy(tape.logits().view(), labels);
    adjoint.mapv_inplace(|v| v * ce_weight);
    let mut loss = ce_weight * ce;
    let grad = match term {
        None => tape
            .backward(adjoint.view(), false, true)
            .params
            .expect("requested params"),
        Some(term) => {
            let batch = xs.nrows();
            let sweep = tape.input_gradient(term.coeffs);
            let mut upstream = Array2::zeros(sweep.input.raw_dim());
            let mut total = 0.0;
            for b in 0..batch {
                let (v, dv) = term.functional.eval(b, sweep.input.row(b));
                total += v;
                upstream.row_mut(b).assign(&dv);
            }
            let scale = term.weight / batch as f64;
            loss += scale * total;
            upstream.mapv_inplace(|v| v * scale);
            match binary_row_scales(adjoint.view(), term.coeffs) {
                Some(scales) => tape.fused_binary_gradient(&sweep, &scales, upstream.view()),
                None => {
                    let mut grad = tape
                        .backward(adjoint.view(), false, true)
                        .params
                        .expect("requested params");
                    grad.add_scaled(&tape.input_gradient_vjp(&sweep, upstream.view()), 1.0);
                    grad
                }
            }
        }
    };
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    Ok((loss, grad))
}

impl Model for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn class_count(&self) -> usize {
        self.output_dim()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        self.forward_batch(xs).into_raw_vec_and_offset().0
    }

    fn input_gradient(&self, x: &[f64], coeffs: &[f64]) -> Vec<f64> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let cs = ArrayView2::from_shape((1, coeffs.len()), coeffs).expect("row view");
        self.tape(xs).input_gradient(cs).input.into_raw_vec_and_offset().0
    }

    fn logits_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward_batch(xs)
    }

    fn input_gradient_batch(&self, xs: ArrayView2<'_, f64>, coeffs: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let tape = self.tape(xs);
        let grad = tape.input_gradient(coeffs).input;
        (tape.into_logits(), grad)
    }

    fn input_gradient_with(
        &self,
        xs: ArrayView2<'_, f64>,
        coeffs_of: &dyn Fn(ArrayView2<'_, f64>) -> Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let tape = self.tape(xs);
        let coeffs = coeffs_of(tape.logits().view());
        let grad = tape.input_gradient(coeffs.view()).input;
        (tape.into_logits(), grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(seed: u64) -> Mlp {
        let mut rng = Rng::new(seed);
        let mut m = Mlp::new(&[3, 5, 4, 2], &mut rng).unwrap();
        for layer in m.layers_mut() {
            layer.bias.mapv_inplace(|_| rng.uniform(-0.3, 0.3));
        }
        m
    }

    #[test]
    fn constant_network_outputs_biases() {
        let layers = vec![
            Layer {
                weight: Array2::zeros((4, 3)),
                bias: Array1::zeros(4),
            },
            Layer {
                weight: Array2::zeros((2, 4)),
                bias: array![0.5, -0.5],
            },
        ];
        let m = Mlp::from_layers(layers).unwrap();
        assert_eq!(Model::logits(&m, &[0.3, -2.0, 7.0]), vec![0.5, -0.5]);
    }

    #[test]
    fn dead_relus_get_zero_weight_gradient() {
        let layers = vec![
            Layer {
                weight: Array2::zeros((4, 3)),
                bias: Array1::zeros(4),
            },
            Layer {
                weight: Array2::from_elem((2, 4), 0.7),
                bias: array![0.1, -0.2],
            },
        ];
        let m = Mlp::from_layers(layers).unwrap();
        let xs = array![[1.0, 2.0, 3.0]];
        let (_, g) = param_gradient(&m, xs.view(), &[0], 1.0, None).unwrap();
        assert!(g.layers[0].weight.iter().all(|&v| v == 0.0));
        assert!(g.layers[0].bias.iter().all(|&v| v == 0.0));
        assert!(g.layers[1].weight.iter().all(|&v| v == 0.0));
        assert!(g.layers[1].bias.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let layers = vec![
            Layer {
                weight: Array2::zeros((4, 3)),
                bias: Array1::zeros(4),
            },
            Layer {
                weight: Array2::zeros((2, 5)),
                bias: Array1::zeros(2),
            },
        ];
        assert!(matches!(Mlp::from_layers(layers), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn batched_and_single_row_agree() {
        let m = tiny(1);
        let mut rng = Rng::new(2);
        let xs = Array2::from_shape_fn((6, 3), |_| rng.gaussian());
        let batch = m.forward_batch(xs.view());
        for b in 0..6 {
            let single = Model::logits(&m, xs.row(b).as_slice().unwrap());
            for c in 0..2 {
                assert_eq!(single[c], batch[[b, c]]);
            }
        }
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let m = tiny(9);
        let x = [0.3, -0.1, 0.8];
        assert_eq!(Model::logits(&m, &x), Model::logits(&m, &x));
    }

    #[test]
    fn cross_entropy_adjoint_sums_to_zero() {
        let logits = array![[1.0, 2.0, -1.0], [0.0, 0.0, 0.0]];
        let (loss, adj) = cross_entropy(logits.view(), &[1, 2]);
        assert!(loss > 0.0);
        for row in adj.rows() {
            assert!(row.sum().abs() < 1e-15);
        }
        let expected = 0.5 * (3.0f64).ln();
        let lse0 = (1f64.exp() + 2f64.exp() + (-1f64).exp()).ln();
        assert!((loss - 0.5 * (lse0 - 2.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn fused_binary_path_matches_separate_sweeps() {
        let m = tiny(5);
        let mut rng = Rng::new(6);
        let xs = Array2::from_shape_fn((7, 3), |_| rng.gaussian());
        let targets = Array2::from_shape_fn((7, 3), |_| rng.gaussian());
        let labels: Vec<usize> = (0..7).map(|b| b % 2).collect();
        let mut coeffs = Array2::zeros((7, 2));
        for (b, &y) in labels.iter().enumerate() {
            coeffs[[b, 1 - y]] = 1.0;
            coeffs[[b, y]] = -1.0;
        }
        let f = CosineToTarget {
            targets: targets.view(),
        };
        let term = InputGradientTerm {
            coeffs: coeffs.view(),
            functional: &f,
            weight: -0.3,
        };
        let (_, fused) = param_gradient(&m, xs.view(), &labels, 1.0, Some(&term)).unwrap();

        let tape = m.tape(xs.view());
        let (_, adjoint) = cross_entropy(tape.logits().view(), &labels);
        let mut separate = tape.backward(adjoint.view(), false, true).params.unwrap();
        let sweep = tape.input_gradient(coeffs.view());
        let mut upstream = Array2::zeros((7, 3));
        for b in 0..7 {
            upstream.row_mut(b).assign(&f.eval(b, sweep.input.row(b)).1);
        }
        upstream.mapv_inplace(|v| v * -0.3 / 7.0);
        separate.add_scaled(&tape.input_gradient_vjp(&sweep, upstream.view()), 1.0);

        for (a, b) in fused.flatten().iter().zip(separate.flatten()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn cosine_functional_derivative_matches_difference_quotient() {
        let targets = array![[0.3, -1.0, 2.0]];
        let f = CosineToTarget {
            targets: targets.view(),
        };
        let u = array![0.5, 0.2, -0.7];
        let (_, g) = f.eval(0, u.view());
        for i in 0..3 {
            let h = 1e-6;
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (f.eval(0, up.view()).0 - f.eval(0, dn.view()).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }
}
