//! "GAM1" binary model container.
//!
//! Layout (little-endian): magic `GAM1`, u32 layer count, then per layer
//! u32 rows, u32 cols, `rows * cols` f64 weights row-major, `rows` f64
//! biases; finally u32 class count (the output width).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mlp::{Layer, Mlp};

pub const MODEL_MAGIC: &[u8; 4] = b"GAM1";

pub fn encode_model(model: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.param_count() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
        for w in layer.weight.iter() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in layer.bias.iter() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out.extend_from_slice(&(model.output_dim() as u32).to_le_bytes());
    out
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated {
            needed: usize::MAX,
            found: self.bytes.len(),
        })?;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                needed: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32_le(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn magic_u32(m: &[u8]) -> u32 {
    u32::from_be_bytes(m.try_into().expect("4 bytes"))
}

pub fn decode_model(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4)?;
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            expected: magic_u32(MODEL_MAGIC),
            found: magic_u32(magic),
        });
    }
    let count = r.u32_le()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.u32_le()? as usize;
        let cols = r.u32_le()? as usize;
        let needed = rows
            .checked_mul(cols)
            .and_then(|w| w.checked_add(rows))
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| Error::InvalidArgument("layer too large".into()))?;
        if needed > r.remaining() {
            return Err(Error::Truncated {
                needed,
                found: r.remaining(),
            });
        }
        let weights = (0..rows * cols).map(|_| r.f64_le()).collect::<Result<Vec<_>>>()?;
        let bias = (0..rows).map(|_| r.f64_le()).collect::<Result<Vec<_>>>()?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((rows, cols), weights).expect("sized above"),
            bias: Array1::from(bias),
        });
    }
    let class_count = r.u32_le()? as usize;
    if r.remaining() != 0 {
        return Err(Error::InvalidArgument(format!("{} trailing bytes after model", r.remaining())));
    }
    let model = Mlp::from_layers(layers)?;
    if model.output_dim() != class_count {
        return Err(Error::ShapeMismatch {
            expected: vec![class_count],
            got: vec![model.output_dim()],
        });
    }
    Ok(model)
}

pub fn save_model(model: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Mlp> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn layout_of_single_layer_model() {
        let model = Mlp::from_layers(vec![Layer {
            weight: Array2::from_shape_vec((2, 1), vec![1.5, -2.0]).unwrap(),
            bias: Array1::from(vec![0.25, 0.0]),
        }])
        .unwrap();
        let bytes = encode_model(&model);
        assert_eq!(&bytes[..4], b"GAM1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.5f64.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 4..], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 4 + 4 + 8 + 4 * 8 + 4);
    }

    #[test]
    fn round_trip_is_exact() {
        let model = Mlp::new(&[5, 7, 3], &mut Rng::new(4)).unwrap();
        assert_eq!(decode_model(&encode_model(&model)).unwrap(), model);
    }

    #[test]
    fn corrupted_inputs() {
        let model = Mlp::new(&[2, 3, 2], &mut Rng::new(4)).unwrap();
        let mut bytes = encode_model(&model);
        assert!(matches!(decode_model(&bytes[..bytes.len() - 9]), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::BadMagic { .. })));
    }
}
