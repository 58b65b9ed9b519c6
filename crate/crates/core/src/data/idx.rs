//! MNIST IDX files: big-endian magic and dimensions, then raw bytes.

use std::fs;
use std::path::Path;

use super::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::persist::Reader;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn check_magic(r: &mut Reader<'_>, expected: u32) -> Result<()> {
    let found = r.u32_be()?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn payload<'a>(r: &mut Reader<'a>, len: usize) -> Result<&'a [u8]> {
    if r.remaining() < len {
        return Err(Error::Truncated {
            needed: len,
            found: r.remaining(),
        });
    }
    r.take(len)
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, IDX_IMAGES_MAGIC)?;
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::InvalidArgument("IDX dimensions overflow".into()))?;
    Ok((count, rows, cols, payload(&mut r, len)?))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, IDX_LABELS_MAGIC)?;
    let count = r.u32_be()? as usize;
    payload(&mut r, count)
}

/// Pixels map affinely from `[0, 255]` to `[-1, 1]`.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let image_bytes = fs::read(images_path)?;
    let label_bytes = fs::read(labels_path)?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let n = rows * cols;
    let class_count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0).max(10);
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| LabeledSample {
            x: pixels[i * n..(i + 1) * n].iter().map(|&p| p as f64 / 127.5 - 1.0).collect(),
            y: y as usize,
            delta_x: None,
        })
        .collect();
    Dataset::new("mnist", n, class_count, samples)
}
