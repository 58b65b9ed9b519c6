//! The differentiable classifier abstraction and the two analytic models.

use ndarray::{Array1, Array2, ArrayView2};

use crate::array::{argmax, norm2, DenseArray};
use crate::error::{Error, Result};

/// A classifier exposing logits and input gradients of logit combinations.
///
/// Shape checks live in the free functions [`forward`] and
/// [`input_gradient`]; trait methods assume well-formed inputs.
pub trait Model: Sync {
    fn input_dim(&self) -> usize;

    fn class_count(&self) -> usize;

    fn logits(&self, x: &[f64]) -> Vec<f64>;

    /// Gradient of `<coeffs, logit(x)>` with respect to `x`.
    fn input_gradient(&self, x: &[f64], coeffs: &[f64]) -> Vec<f64>;

    /// Predicted class, ties toward the smaller index.
    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    fn logits_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((xs.nrows(), self.class_count()));
        for (b, row) in xs.rows().into_iter().enumerate() {
            let l = self.logits(&row.to_vec());
            out.row_mut(b).assign(&Array1::from(l));
        }
        out
    }

    /// Logits and input gradients for a batch, one coefficient row per sample.
    fn input_gradient_batch(&self, xs: ArrayView2<'_, f64>, coeffs: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let logits = self.logits_batch(xs);
        let mut grads = Array2::zeros(xs.raw_dim());
        for (b, row) in xs.rows().into_iter().enumerate() {
            let g = self.input_gradient(&row.to_vec(), &coeffs.row(b).to_vec());
            grads.row_mut(b).assign(&Array1::from(g));
        }
        (logits, grads)
    }

    /// Input gradients whose coefficients depend on the logits themselves
    /// (for example the cross-entropy adjoint). Implementations with a tape
    /// override this to share one forward pass.
    fn input_gradient_with(
        &self,
        xs: ArrayView2<'_, f64>,
        coeffs_of: &dyn Fn(ArrayView2<'_, f64>) -> Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let logits = self.logits_batch(xs);
        let coeffs = coeffs_of(logits.view());
        let (_, grads) = self.input_gradient_batch(xs, coeffs.view());
        (logits, grads)
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn class_count(&self) -> usize {
        (**self).class_count()
    }
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (**self).logits(x)
    }
    fn input_gradient(&self, x: &[f64], coeffs: &[f64]) -> Vec<f64> {
        (**self).input_gradient(x, coeffs)
    }
    fn logits_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        (**self).logits_batch(xs)
    }
    fn input_gradient_batch(&self, xs: ArrayView2<'_, f64>, coeffs: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        (**self).input_gradient_batch(xs, coeffs)
    }
    fn input_gradient_with(
        &self,
        xs: ArrayView2<'_, f64>,
        coeffs_of: &dyn Fn(ArrayView2<'_, f64>) -> Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        (**self).input_gradient_with(xs, coeffs_of)
    }
}

fn check_input(model: &dyn Model, x: &DenseArray) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![model.input_dim()],
            got: x.shape().to_vec(),
        });
    }
    Ok(())
}

/// Logits of `model` at `x`, validated.
pub fn forward(model: &dyn Model, x: &DenseArray) -> Result<DenseArray> {
    check_input(model, x)?;
    let logits = model.logits(x.as_slice());
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    DenseArray::vector(logits)
}

/// `grad_x <coeffs, logit(x)>`, validated.
pub fn input_gradient(model: &dyn Model, x: &DenseArray, coeffs: &DenseArray) -> Result<DenseArray> {
    check_input(model, x)?;
    if coeffs.len() != model.class_count() {
        return Err(Error::ShapeMismatch {
            expected: vec![model.class_count()],
            got: coeffs.shape().to_vec(),
        });
    }
    let g = model.input_gradient(x.as_slice(), coeffs.as_slice());
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input gradient".into()));
    }
    DenseArray::vector(g)
}

/// `logit(x) = W^T x + b` with `W` of shape `n x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `n x C`; column `c` is the input gradient of logit `c`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearModel {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![weights.ncols()],
                got: vec![bias.len()],
            });
        }
        if weights.ncols() < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        Ok(Self { weights, bias })
    }

    /// Build from class columns `w_c`.
    pub fn from_columns(columns: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("columns of unequal length".into()));
        }
        let weights = Array2::from_shape_fn((n, columns.len()), |(i, c)| columns[c][i]);
        Self::new(weights, Array1::from(bias))
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.weights.column(c).to_vec()
    }
}

impl Model for LinearModel {
    fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn class_count(&self) -> usize {
        self.weights.ncols()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let x = ndarray::ArrayView1::from(x);
        (self.weights.t().dot(&x) + &self.bias).to_vec()
    }

    fn input_gradient(&self, _x: &[f64], coeffs: &[f64]) -> Vec<f64> {
        self.weights.dot(&ndarray::ArrayView1::from(coeffs)).to_vec()
    }

    fn logits_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        xs.dot(&self.weights) + &self.bias
    }

    fn input_gradient_batch(&self, xs: ArrayView2<'_, f64>, coeffs: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        (self.logits_batch(xs), coeffs.dot(&self.weights.t()))
    }
}

/// Optimally robust Spheres classifier.
///
/// Class index 0 is the inner sphere (label -1), index 1 the outer sphere
/// (label +1): `logit_0 = t - |x|`, `logit_1 = |x| - t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpheresModel {
    pub dim: usize,
    pub threshold: f64,
}

impl RadialSpheresModel {
    pub const THRESHOLD: f64 = 1.15;

    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            threshold: Self::THRESHOLD,
        }
    }
}

impl Model for RadialSpheresModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn class_count(&self) -> usize {
        2
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let r = norm2(x) - self.threshold;
        vec![-r, r]
    }

    fn input_gradient(&self, x: &[f64], coeffs: &[f64]) -> Vec<f64> {
        let norm = norm2(x);
        if norm == 0.0 {
            return vec![0.0; x.len()];
        }
        let s = (coeffs[1] - coeffs[0]) / norm;
        x.iter().map(|v| v * s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(v: &[f64]) -> DenseArray {
        DenseArray::vector(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_linear_model_logits() {
        let m = LinearModel::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let l = forward(&m, &dense(&[2.0, 1.0])).unwrap();
        assert_eq!(l.as_slice(), &[2.0, 1.0]);
        assert_eq!(m.predict(&[2.0, 1.0]), 0);
    }

    #[test]
    fn radial_logits_at_outer_radius() {
        let m = RadialSpheresModel::new(3);
        let x = [1.3, 0.0, 0.0];
        let l = m.logits(&x);
        assert!((l[1] - 0.15).abs() < 1e-12);
        assert!((l[0] + 0.15).abs() < 1e-12);
        assert_eq!(m.predict(&x), 1);
    }

    #[test]
    fn linear_gradient_is_column_combination() {
        let m = LinearModel::from_columns(&[vec![3.0, 4.0], vec![0.0, 0.0]], vec![0.0, 0.0]).unwrap();
        for x in [[0.0, 0.0], [5.0, -2.0]] {
            let g = input_gradient(&m, &dense(&x), &dense(&[-1.0, 1.0])).unwrap();
            assert_eq!(g.as_slice(), &[-3.0, -4.0]);
        }
    }

    #[test]
    fn radial_gradient_of_outer_logit_is_unit_radial() {
        let m = RadialSpheresModel::new(2);
        // coefficients selecting logit_{+1}, which is class index 1
        let g = input_gradient(&m, &dense(&[0.6, 0.8]), &dense(&[0.0, 1.0])).unwrap();
        assert!((g.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((g.as_slice()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let m = RadialSpheresModel::new(3);
        assert!(matches!(forward(&m, &dense(&[1.0, 2.0])), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(
            input_gradient(&m, &dense(&[1.0, 2.0, 3.0]), &dense(&[1.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
