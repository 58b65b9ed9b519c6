//! Adam with bias-corrected moments.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Optimizer state for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. `params` and `grads` must list the same tensors in the
    /// same order on every call.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument("params/grads length mismatch".into()));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("Adam gradient".into()));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        if self.first.len() != grads.len() {
            return Err(Error::InvalidArgument("parameter list changed between steps".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let step_size = lr / bc1;
        let inv_bc2 = 1.0 / (1.0 - beta2.powi(self.step as i32));
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            if p.len() != g.len() || m.len() != g.len() {
                return Err(Error::InvalidArgument("tensor size changed between steps".into()));
            }
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= step_size * *m / ((*v * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_normalized_gradient() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.01));
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -4.0, 1e-3];
        adam.step(vec![&mut p], vec![&g]).unwrap();
        for (i, (&before, gi)) in [1.0, -2.0, 0.5].iter().zip(g).enumerate() {
            let expected = before - 0.01 * gi / (gi.abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-15, "{i}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![0.25, 7.0];
        for _ in 0..3 {
            adam.step(vec![&mut p], vec![&[0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![0.25, 7.0]);
    }

    #[test]
    fn two_constant_steps_match_hand_recurrence() {
        // g = 0.5, lr = 0.1, beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
        // t=1: m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25 -> step 0.1 * 0.5 / (0.5 + 1e-8)
        // t=2: m = 0.095, v = 0.00049975, m_hat = 0.095 / 0.19 = 0.5,
        //      v_hat = 0.00049975 / 0.001999 = 0.25 -> same step again.
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        let mut p = vec![1.0];
        adam.step(vec![&mut p], vec![&[0.5]]).unwrap();
        adam.step(vec![&mut p], vec![&[0.5]]).unwrap();
        let one = 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - (1.0 - 2.0 * one)).abs() < 1e-12, "{}", p[0]);
    }

    #[test]
    fn non_finite_gradient_is_error() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![0.0];
        assert!(adam.step(vec![&mut p], vec![&[f64::NAN]]).is_err());
    }
}
