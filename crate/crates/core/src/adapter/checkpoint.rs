//! `ADP1` checkpoint files.
//!
//! Layout, little-endian: magic `ADP1`, `u32 d`, `u32 r`, `f32 alpha`,
//! `f32 dropout`, then the six tensors as `f32` in [`super::TENSOR_NAMES`] order,
//! then a `u8` flag. When the flag is 1 the first moments, the second moments
//! (same order, `f32`) and a `u64` step follow.

use std::path::Path;

use super::optim::OptimizerState;
use super::{AdapterError, AdapterParams, Tensors};
use crate::encoder::fnv1a64;

const MAGIC: &[u8; 4] = b"ADP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: AdapterParams,
    pub opt: Option<OptimizerState>,
}

fn put_tensors(out: &mut Vec<u8>, t: &Tensors) {
    for s in t.slices() {
        for &v in s {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

fn encode_params(p: &AdapterParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * p.weights.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(p.dimension() as u32).to_le_bytes());
    out.extend_from_slice(&(p.bottleneck() as u32).to_le_bytes());
    out.extend_from_slice(&(p.alpha as f32).to_le_bytes());
    out.extend_from_slice(&(p.dropout as f32).to_le_bytes());
    put_tensors(&mut out, &p.weights);
    out
}

/// FNV-1a over the parameter section of the checkpoint encoding.
pub fn params_fingerprint(p: &AdapterParams) -> u64 {
    fnv1a64(&encode_params(p))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = encode_params(&self.params);
        match &self.opt {
            None => out.push(0),
            Some(o) => {
                out.push(1);
                put_tensors(&mut out, &o.m);
                put_tensors(&mut out, &o.v);
                out.extend_from_slice(&o.step.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a checkpoint. With `expected_dimension` set, a different `d`
    /// is a [`AdapterError::ShapeMismatch`].
    pub fn from_bytes(bytes: &[u8], expected_dimension: Option<usize>) -> Result<Self, AdapterError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(AdapterError::BadMagic);
        }
        let d = r.u32()? as usize;
        let b = r.u32()? as usize;
        if let Some(want) = expected_dimension.filter(|&w| w != d) {
            return Err(AdapterError::ShapeMismatch(format!(
                "checkpoint dimension {d}, expected {want}"
            )));
        }
        if d < 2 || b < 1 {
            return Err(AdapterError::ShapeMismatch(format!("d={d}, r={b}")));
        }
        let alpha = f64::from(r.f32()?);
        let dropout = f64::from(r.f32()?);
        let weights = r.tensors(d, b)?;
        let opt = match r.take(1)?[0] {
            0 => None,
            1 => {
                let m = r.tensors(d, b)?;
                let v = r.tensors(d, b)?;
                let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                Some(OptimizerState { m, v, step })
            }
            f => return Err(AdapterError::ShapeMismatch(format!("optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(AdapterError::ShapeMismatch(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        if !weights.all_finite() {
            return Err(AdapterError::NonFiniteInput);
        }
        Ok(Self {
            params: AdapterParams {
                alpha,
                dropout,
                weights,
                version: opt.as_ref().map_or(0, |o| o.step),
            },
            opt,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AdapterError> {
        let end = self.pos.checked_add(n).ok_or(AdapterError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(AdapterError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AdapterError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, AdapterError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensors(&mut self, d: usize, r: usize) -> Result<Tensors, AdapterError> {
        let mut t = Tensors::zeros(d, r);
        for s in t.slices_mut() {
            let raw = self.take(4 * s.len())?;
            for (v, c) in s.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")));
            }
        }
        Ok(t)
    }
}

pub fn save_checkpoint(p: &AdapterParams, opt: Option<&OptimizerState>, path: &Path) -> Result<(), AdapterError> {
    let ck = Checkpoint {
        params: p.clone(),
        opt: opt.cloned(),
    };
    std::fs::write(path, ck.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected_dimension: Option<usize>) -> Result<Checkpoint, AdapterError> {
    Checkpoint::from_bytes(&std::fs::read(path)?, expected_dimension)
}
