use std::path::Path;

use super::{Activation, Layer, MlpModel, Tensor2};
use crate::{Error, Result};

/// Checkpoint magic; bump the trailing digit on layout changes.
const MAGIC: &[u8; 8] = b"DPFLMLP1";

/// Serializes a model to the binary checkpoint layout: magic, split index,
/// layer count, then per layer `rows, cols, activation, weight, bias` with
/// all integers u64 little-endian and all floats f64 little-endian. The
/// float encoding is bit-exact, so save/load round-trips are bitwise.
pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.split_idx() as u64).to_le_bytes());
    out.extend_from_slice(&(model.num_layers() as u64).to_le_bytes());
    for layer in model.layers() {
        out.extend_from_slice(&(layer.weight.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(layer.weight.cols() as u64).to_le_bytes());
        out.push(match layer.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        for v in layer.weight.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.bias.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::InvalidArgument(format!(
                "checkpoint truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::InvalidArgument("bad checkpoint magic".into()));
    }
    let split_idx = r.u64()? as usize;
    let layer_count = r.u64()? as usize;
    // Cap before allocating; a corrupt count must not trigger a huge alloc.
    if layer_count == 0 || layer_count > 1024 {
        return Err(Error::InvalidArgument(format!(
            "implausible layer count {layer_count}"
        )));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        if rows.saturating_mul(cols) > (1 << 28) {
            return Err(Error::InvalidArgument(format!(
                "implausible layer shape {rows}x{cols}"
            )));
        }
        let activation = match r.take(1)?[0] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown activation tag {other}"
                )))
            }
        };
        let mut wdata = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            wdata.push(r.f64()?);
        }
        let mut bdata = Vec::with_capacity(cols);
        for _ in 0..cols {
            bdata.push(r.f64()?);
        }
        let weight = Tensor2::from_vec(rows, cols, wdata)?;
        let bias = Tensor2::from_vec(1, cols, bdata)?;
        layers.push(Layer::new(weight, bias, activation)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - r.pos
        )));
    }
    MlpModel::from_layers(layers, split_idx)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    model_from_bytes(&bytes)
}
