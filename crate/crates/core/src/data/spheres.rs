//! Two concentric spheres: class 0 on radius 1.0, class 1 on radius 1.3.

use ndarray::Array2;

use super::{Batch, Dataset, LabeledSample, SampleSource};
use crate::array::norm2;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const INNER_RADIUS: f64 = 1.0;
pub const OUTER_RADIUS: f64 = 1.3;

const RADIUS_TOLERANCE: f64 = 1e-9;

/// Radial residual onto the other sphere.
pub fn spheres_delta_x(x: &[f64]) -> Result<Vec<f64>> {
    let r = norm2(x);
    let factor = if (r - INNER_RADIUS).abs() <= RADIUS_TOLERANCE {
        OUTER_RADIUS / INNER_RADIUS - 1.0
    } else if (r - OUTER_RADIUS).abs() <= RADIUS_TOLERANCE {
        INNER_RADIUS / OUTER_RADIUS - 1.0
    } else {
        return Err(Error::NotOnSphere(r));
    };
    Ok(x.iter().map(|v| v * factor).collect())
}

/// Sample number `index` of the stream identified by `seed`.
pub fn spheres_sample(dim: usize, seed: u64, index: u64) -> LabeledSample {
    let mut rng = Rng::child(seed, index);
    let y = rng.below(2);
    let radius = if y == 0 { INNER_RADIUS } else { OUTER_RADIUS };
    let x = loop {
        let g = rng.gaussian_vec(dim);
        let norm = norm2(&g);
        if norm > 0.0 {
            break g.into_iter().map(|v| v * radius / norm).collect::<Vec<_>>();
        }
    };
    let delta_x = spheres_delta_x(&x).expect("constructed on a sphere");
    LabeledSample {
        x,
        y,
        delta_x: Some(delta_x),
    }
}

pub fn sample_spheres(count: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if dim < 2 || count == 0 {
        return Err(Error::InvalidArgument(format!("spheres need dim >= 2 and count >= 1 (got {dim}, {count})")));
    }
    let samples = (0..count as u64).map(|i| spheres_sample(dim, seed, i)).collect();
    Dataset::new("spheres", dim, 2, samples)
}

/// Fresh Spheres samples every epoch, generated batch by batch.
#[derive(Debug, Clone)]
pub struct SpheresStream {
    pub dim: usize,
    pub per_epoch: usize,
    pub seed: u64,
}

impl SampleSource for SpheresStream {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn class_count(&self) -> usize {
        2
    }

    fn has_delta(&self) -> bool {
        true
    }

    fn samples_per_epoch(&self) -> usize {
        self.per_epoch
    }

    fn epoch_batches<'a>(&'a self, epoch: usize, batch_size: usize, seed: u64) -> Box<dyn Iterator<Item = Batch> + 'a> {
        let stream = Rng::child(self.seed ^ seed, epoch as u64).next_u64();
        let batch_size = batch_size.max(1);
        let total = self.per_epoch;
        Box::new((0..total.div_ceil(batch_size)).map(move |b| {
            let start = b * batch_size;
            let end = (start + batch_size).min(total);
            let mut xs = Array2::zeros((end - start, self.dim));
            let mut deltas = Array2::zeros((end - start, self.dim));
            let mut labels = Vec::with_capacity(end - start);
            for (row, i) in (start..end).enumerate() {
                let s = spheres_sample(self.dim, stream, i as u64);
                xs.row_mut(row).assign(&ndarray::ArrayView1::from(&s.x));
                deltas
                    .row_mut(row)
                    .assign(&ndarray::ArrayView1::from(s.delta_x.as_ref().expect("spheres carry deltas")));
                labels.push(s.y);
            }
            Batch {
                xs,
                labels,
                deltas: Some(deltas),
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{add, dot};

    #[test]
    fn unit_axis_residual() {
        let d = spheres_delta_x(&[1.0, 0.0, 0.0]).unwrap();
        assert!((d[0] - 0.3).abs() < 1e-15 && d[1] == 0.0 && d[2] == 0.0);
        assert!(matches!(spheres_delta_x(&[1.1, 0.0]), Err(Error::NotOnSphere(_))));
    }

    #[test]
    fn residual_lands_on_the_other_sphere() {
        let ds = sample_spheres(200, 7, 3).unwrap();
        for s in &ds.samples {
            let r = norm2(&s.x);
            let d = s.delta_x.as_ref().unwrap();
            let target = if s.y == 0 { OUTER_RADIUS } else { INNER_RADIUS };
            assert!((norm2(&add(&s.x, d)) - target).abs() < 1e-12);
            assert!((norm2(d) - 0.3).abs() < 1e-12);
            let cos = dot(&s.x, d) / (r * norm2(d));
            assert!((cos - if s.y == 0 { 1.0 } else { -1.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn class_balance() {
        let ds = sample_spheres(10_000, 5, 11).unwrap();
        let inner = ds.samples.iter().filter(|s| s.y == 0).count() as f64 / 1e4;
        assert!((inner - 0.5).abs() < 0.02, "{inner}");
    }

    #[test]
    fn stream_epochs_differ_but_repeat() {
        let s = SpheresStream {
            dim: 4,
            per_epoch: 10,
            seed: 1,
        };
        let a: Vec<_> = s.epoch_batches(0, 4, 0).map(|b| b.xs).collect();
        let b: Vec<_> = s.epoch_batches(0, 4, 0).map(|b| b.xs).collect();
        let c: Vec<_> = s.epoch_batches(1, 4, 0).map(|b| b.xs).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.iter().map(|m| m.nrows()).sum::<usize>(), 10);
    }
}
