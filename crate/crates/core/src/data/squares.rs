//! Squares32: a centered bright square on a dark background, its side
//! encoding the class, plus smoothed noise.

use super::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SquaresConfig {
    /// Image side in pixels.
    pub side: usize,
    /// Square side for class 0 and class 1.
    pub square_sides: [usize; 2],
    pub sigma_noise: f64,
    pub sigma_blur: f64,
    pub background: f64,
    pub foreground: f64,
}

impl Default for SquaresConfig {
    fn default() -> Self {
        Self {
            side: 32,
            square_sides: [20, 13],
            sigma_noise: 0.1,
            sigma_blur: 2.0,
            background: -1.0,
            foreground: 1.0,
        }
    }
}

impl SquaresConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        for &s in &self.square_sides {
            if s == 0 || s >= self.side {
                return bad(format!("square side {s} must be in 1..{}", self.side));
            }
        }
        if self.square_sides[0] == self.square_sides[1] {
            return bad("the two classes need different square sides".into());
        }
        for v in [self.background, self.foreground] {
            if !(-1.0..=1.0).contains(&v) {
                return bad(format!("intensity {v} outside [-1, 1]"));
            }
        }
        if !(self.sigma_noise >= 0.0 && self.sigma_blur >= 0.0) {
            return bad("noise and blur widths must be non-negative".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    /// Noiseless image of `class`, row-major.
    pub fn template(&self, class: usize) -> Vec<f64> {
        let s = self.square_sides[class];
        let lo = (self.side - s) / 2;
        let hi = lo + s;
        let mut img = vec![self.background; self.dim()];
        for r in lo..hi {
            for c in lo..hi {
                img[r * self.side + c] = self.foreground;
            }
        }
        img
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with replicated edges.
fn blur(img: &[f64], side: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return img.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let clampi = |i: isize| i.clamp(0, side as isize - 1) as usize;
    let mut tmp = vec![0.0; img.len()];
    for r in 0..side {
        for c in 0..side {
            tmp[r * side + c] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * img[r * side + clampi(c as isize + j as isize - radius)])
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for r in 0..side {
        for c in 0..side {
            out[r * side + c] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[clampi(r as isize + j as isize - radius) * side + c])
                .sum();
        }
    }
    out
}

pub fn gen_squares(count: usize, cfg: &SquaresConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let templates = [cfg.template(0), cfg.template(1)];
    let deltas: Vec<Vec<f64>> = (0..2)
        .map(|y| templates[1 - y].iter().zip(&templates[y]).map(|(a, b)| a - b).collect())
        .collect();
    let samples = (0..count as u64)
        .map(|i| {
            let mut rng = Rng::child(seed, i);
            let y = rng.below(2);
            let x = if cfg.sigma_noise == 0.0 {
                templates[y].clone()
            } else {
                let noise: Vec<f64> = (0..cfg.dim()).map(|_| cfg.sigma_noise * rng.gaussian()).collect();
                blur(&noise, cfg.side, cfg.sigma_blur)
                    .iter()
                    .zip(&templates[y])
                    .map(|(n, t)| (t + n).clamp(-1.0, 1.0))
                    .collect()
            };
            LabeledSample {
                x,
                y,
                delta_x: Some(deltas[y].clone()),
            }
        })
        .collect();
    Dataset::new("squares32", cfg.dim(), 2, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::norm2;

    #[test]
    fn noiseless_images_are_templates() {
        let cfg = SquaresConfig {
            sigma_noise: 0.0,
            ..Default::default()
        };
        let ds = gen_squares(20, &cfg, 1).unwrap();
        for s in &ds.samples {
            assert_eq!(s.x, cfg.template(s.y));
            let moved: Vec<f64> = s.x.iter().zip(s.delta_x.as_ref().unwrap()).map(|(a, b)| a + b).collect();
            assert_eq!(moved, cfg.template(1 - s.y));
        }
    }

    #[test]
    fn residual_is_the_frame() {
        let cfg = SquaresConfig::default();
        let ds = gen_squares(10, &cfg, 2).unwrap();
        let s = ds.samples.iter().find(|s| s.y == 1).unwrap();
        let d = s.delta_x.as_ref().unwrap();
        assert_eq!(d.iter().filter(|&&v| v == 2.0).count(), 20 * 20 - 13 * 13);
        assert!(d.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!((norm2(d) - 2.0 * 231f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noisy_images_stay_in_range() {
        let cfg = SquaresConfig {
            sigma_noise: 0.8,
            ..Default::default()
        };
        let ds = gen_squares(10, &cfg, 3).unwrap();
        assert!(ds.samples.iter().flat_map(|s| &s.x).all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(ds.samples[0].x, cfg.template(ds.samples[0].y));
    }

    #[test]
    fn blur_preserves_constants() {
        let img = vec![0.25; 36];
        for v in blur(&img, 6, 2.0) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_configs() {
        let mut cfg = SquaresConfig::default();
        cfg.square_sides = [32, 13];
        assert!(cfg.validate().is_err());
        cfg.square_sides = [13, 13];
        assert!(cfg.validate().is_err());
    }
}
