//! Labeled datasets, the synthetic generators, MNIST ingestion and the
//! "GDA1" container.

mod idx;
mod spheres;
mod squares;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::persist::Reader;
use crate::rng::Rng;

pub use idx::{load_mnist_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use spheres::{
    sample_spheres, spheres_delta_x, spheres_sample, SpheresStream, INNER_RADIUS, OUTER_RADIUS,
};
pub use squares::{gen_squares, SquaresConfig};

pub const DATASET_MAGIC: &[u8; 4] = b"GDA1";

/// Header bytes of a GDA1 file: magic, count, n, class count, delta flag.
pub const DATASET_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: usize,
    /// Residual from `x` to the closest point of another class's support.
    pub delta_x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub n: usize,
    pub class_count: usize,
    pub split: Split,
    pub samples: Vec<LabeledSample>,
}

/// A mini-batch in matrix form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub xs: Array2<f64>,
    pub labels: Vec<usize>,
    pub deltas: Option<Array2<f64>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, n: usize, class_count: usize, samples: Vec<LabeledSample>) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidArgument("class_count must be at least 2".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != n || s.delta_x.as_ref().is_some_and(|d| d.len() != n) {
                return Err(Error::ShapeMismatch {
                    expected: vec![n],
                    got: vec![s.x.len()],
                });
            }
            if s.y >= class_count {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} has label {} >= class_count {class_count}",
                    s.y
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            n,
            class_count,
            split: Split::default(),
            samples,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when every sample carries a residual.
    pub fn has_delta(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.delta_x.is_some())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.y).collect()
    }

    /// The first `count` samples (or all of them).
    pub fn head(&self, count: usize) -> Dataset {
        Dataset {
            samples: self.samples[..count.min(self.len())].to_vec(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            n: self.n,
            class_count: self.class_count,
            split: self.split,
            samples: Vec::new(),
        }
    }

    /// Gather the given samples into matrices.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut xs = Array2::zeros((indices.len(), self.n));
        let with_delta = indices.iter().all(|&i| self.samples[i].delta_x.is_some()) && !indices.is_empty();
        let mut deltas = with_delta.then(|| Array2::zeros((indices.len(), self.n)));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let s = &self.samples[i];
            xs.row_mut(row).assign(&ndarray::ArrayView1::from(&s.x));
            if let (Some(d), Some(sd)) = (deltas.as_mut(), s.delta_x.as_ref()) {
                d.row_mut(row).assign(&ndarray::ArrayView1::from(sd));
            }
            labels.push(s.y);
        }
        Batch { xs, labels, deltas }
    }

    /// All samples as one batch.
    pub fn all(&self) -> Batch {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Replace residuals, one per sample.
    pub fn with_deltas(mut self, deltas: Vec<Vec<f64>>) -> Result<Self> {
        if deltas.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.len()],
                got: vec![deltas.len()],
            });
        }
        for (s, d) in self.samples.iter_mut().zip(deltas) {
            if d.len() != self.n {
                return Err(Error::ShapeMismatch {
                    expected: vec![self.n],
                    got: vec![d.len()],
                });
            }
            s.delta_x = Some(d);
        }
        Ok(self)
    }
}

/// Where training draws its mini-batches from.
pub trait SampleSource {
    fn input_dim(&self) -> usize;

    fn class_count(&self) -> usize;

    fn has_delta(&self) -> bool;

    fn samples_per_epoch(&self) -> usize;

    /// Mini-batches of one epoch; deterministic in `(seed, epoch)`.
    fn epoch_batches<'a>(&'a self, epoch: usize, batch_size: usize, seed: u64) -> Box<dyn Iterator<Item = Batch> + 'a>;
}

impl SampleSource for Dataset {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn has_delta(&self) -> bool {
        Dataset::has_delta(self)
    }

    fn samples_per_epoch(&self) -> usize {
        self.len()
    }

    fn epoch_batches<'a>(&'a self, epoch: usize, batch_size: usize, seed: u64) -> Box<dyn Iterator<Item = Batch> + 'a> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        Rng::child(seed, epoch as u64).shuffle(&mut order);
        let batch_size = batch_size.max(1);
        Box::new((0..order.len().div_ceil(batch_size)).map(move |b| {
            let end = ((b + 1) * batch_size).min(order.len());
            self.batch(&order[b * batch_size..end])
        }))
    }
}

/// Keep samples whose label is in `keep`, relabeled by ascending position.
pub fn filter_classes(ds: &Dataset, keep: &[usize]) -> Result<Dataset> {
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("no classes to keep".into()));
    }
    let samples: Vec<LabeledSample> = ds
        .samples
        .iter()
        .filter_map(|s| {
            keep.binary_search(&s.y).ok().map(|y| LabeledSample {
                y,
                ..s.clone()
            })
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyResult);
    }
    let mut out = Dataset::new(ds.name.clone(), ds.n, keep.len().max(2), samples)?;
    out.split = ds.split;
    Ok(out)
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let has_delta = ds.has_delta();
    let per_sample = 4 + ds.n * 4 * if has_delta { 2 } else { 1 };
    let mut out = Vec::with_capacity(DATASET_HEADER_LEN + ds.len() * per_sample);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.n as u32).to_le_bytes());
    out.extend_from_slice(&(ds.class_count as u32).to_le_bytes());
    out.push(has_delta as u8);
    for s in &ds.samples {
        out.extend_from_slice(&(s.y as u32).to_le_bytes());
        for &v in &s.x {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if has_delta {
            for &v in s.delta_x.as_ref().expect("checked by has_delta") {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_dataset(bytes: &[u8], name: &str) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4)?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: u32::from_be_bytes(*DATASET_MAGIC),
            found: u32::from_be_bytes(magic.try_into().expect("4 bytes")),
        });
    }
    let count = r.u32_le()? as usize;
    let n = r.u32_le()? as usize;
    let class_count = r.u32_le()? as usize;
    let has_delta = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::InvalidArgument(format!("has_delta flag {other}"))),
    };
    let per_sample = 4 + 4 * n * if has_delta { 2 } else { 1 };
    let needed = count.saturating_mul(per_sample);
    if needed != r.remaining() {
        if needed > r.remaining() {
            return Err(Error::Truncated {
                needed: DATASET_HEADER_LEN + needed,
                found: bytes.len(),
            });
        }
        return Err(Error::InvalidArgument(format!(
            "{} trailing bytes after dataset",
            r.remaining() - needed
        )));
    }
    let read_vec = |r: &mut Reader<'_>| -> Result<Vec<f64>> { (0..n).map(|_| r.f32_le().map(f64::from)).collect() };
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let y = r.u32_le()? as usize;
        let x = read_vec(&mut r)?;
        let delta_x = if has_delta { Some(read_vec(&mut r)?) } else { None };
        samples.push(LabeledSample { x, y, delta_x });
    }
    Dataset::new(name, n, class_count, samples)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

/// Load a GDA1 file; the dataset takes its name from the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    decode_dataset(&fs::read(path)?, name)
}

/// Write `key = value` lines.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(k);
        text.push_str(" = ");
        text.push_str(v);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Read `key = value` lines written by [`write_manifest`].
pub fn read_manifest(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x: Vec<f64>, y: usize) -> LabeledSample {
        LabeledSample { x, y, delta_x: None }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let ds = Dataset::new("e", 3, 2, vec![]).unwrap();
        let bytes = encode_dataset(&ds);
        assert_eq!(bytes.len(), DATASET_HEADER_LEN);
        assert_eq!(decode_dataset(&bytes, "e").unwrap(), ds);
    }

    #[test]
    fn filter_relabels_in_order() {
        let ds = Dataset::new("d", 1, 8, [3, 5, 7, 3].iter().map(|&y| sample(vec![y as f64], y)).collect()).unwrap();
        let f = filter_classes(&ds, &[5, 3]).unwrap();
        assert_eq!(f.labels(), vec![0, 1, 0]);
        assert_eq!(f.samples[1].x, vec![5.0]);
        assert!(matches!(filter_classes(&ds, &[9]), Err(Error::EmptyResult)));
    }

    #[test]
    fn corrupt_magic_and_truncation() {
        let ds = Dataset::new("d", 2, 2, vec![sample(vec![0.5, -0.5], 1)]).unwrap();
        let mut bytes = encode_dataset(&ds);
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1], "d"), Err(Error::Truncated { .. })));
        bytes[1] = b'Z';
        assert!(matches!(decode_dataset(&bytes, "d"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn epoch_batches_cover_every_sample_once() {
        let ds = Dataset::new("d", 1, 2, (0..23).map(|i| sample(vec![i as f64], i % 2)).collect()).unwrap();
        let mut seen: Vec<f64> = ds.epoch_batches(3, 5, 9).flat_map(|b| b.xs.into_raw_vec_and_offset().0).collect();
        assert_eq!(seen.len(), 23);
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..23).map(|i| i as f64).collect::<Vec<_>>());
        let a: Vec<usize> = ds.epoch_batches(0, 5, 9).flat_map(|b| b.labels).collect();
        let b: Vec<usize> = ds.epoch_batches(0, 5, 9).flat_map(|b| b.labels).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        assert!(Dataset::new("d", 1, 2, vec![sample(vec![0.0], 2)]).is_err());
    }
}
