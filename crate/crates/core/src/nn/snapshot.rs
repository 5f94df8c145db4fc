//! Flat binary parameter snapshots.
//!
//! Layout: magic `OFNN`, version `u16`, then per layer `rows: u32`,
//! `cols: u32`, `rows·cols` weights row-major, then `rows` biases. All numbers
//! little-endian, floats as IEEE-754 binary64.

use ndarray::{Array1, Array2};

use super::{DenseLayer, NnError};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"OFNN";
pub const SNAPSHOT_VERSION: u16 = 1;

pub fn write_snapshot<'a>(layers: impl IntoIterator<Item = &'a DenseLayer>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    for layer in layers {
        let (rows, cols) = layer.weights.dim();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in layer.weights.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.biases.iter() {
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
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::Snapshot(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NnError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NnError::Snapshot("layer too large".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_snapshot(bytes: &[u8]) -> Result<Vec<DenseLayer>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != SNAPSHOT_MAGIC {
        return Err(NnError::Snapshot("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(NnError::Snapshot(format!("unsupported version {version}")));
    }
    let mut layers = Vec::new();
    while r.pos < bytes.len() {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let weights = r.f64s(rows * cols)?;
        let biases = r.f64s(rows)?;
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((rows, cols), weights).expect("length checked"),
            biases: Array1::from(biases),
        });
    }
    Ok(layers)
}
