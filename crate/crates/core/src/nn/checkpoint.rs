//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"SPTRKCKP"
//! 8       4     u32 format version (currently 1)
//! 12      4     u32 header length N in bytes
//! 16      N     UTF-8 JSON header (see `CheckpointHeader`)
//! 16+N    ...   payload: for each entry of `header.arrays`, in order,
//!               product(shape) f64 values, little-endian IEEE-754
//! ```
//!
//! Values are stored as raw bit patterns, so save followed by load reproduces
//! every parameter exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::Array;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPTRKCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Model configuration, opaque to the container.
    pub config: serde_json::Value,
    /// Number of optimizer steps taken so far.
    pub step: u64,
    /// Number of completed training epochs.
    pub epochs: u32,
    pub arrays: Vec<ArrayMeta>,
}

pub fn write_checkpoint<W: Write, P: Parameters + ?Sized>(
    mut w: W,
    config: serde_json::Value,
    step: u64,
    epochs: u32,
    params: &P,
) -> Result<()> {
    let named = params.named_arrays();
    let header = CheckpointHeader {
        config,
        step,
        epochs,
        arrays: named
            .iter()
            .map(|(name, a)| ArrayMeta {
                name: name.clone(),
                shape: a.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, a) in &named {
        for v in a.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointHeader, Vec<(String, Array)>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut arrays = Vec::with_capacity(header.arrays.len());
    let mut buf = [0u8; 8];
    for meta in &header.arrays {
        let n: usize = meta.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        arrays.push((meta.name.clone(), Array::from_vec(&meta.shape, data)?));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok((header, arrays))
}

/// Copies named arrays into `params`, checking names and shapes.
pub fn restore<P: Parameters + ?Sized>(params: &mut P, arrays: &[(String, Array)]) -> Result<()> {
    let mut idx = 0;
    let mut err = None;
    params.visit_mut("", &mut |name, a| {
        if err.is_some() {
            return;
        }
        match arrays.get(idx) {
            Some((n, src)) if n == name && src.shape() == a.shape() => *a = src.clone(),
            Some((n, src)) => {
                err = Some(format!("expected `{name}` {:?}, found `{n}` {:?}", a.shape(), src.shape()))
            }
            None => err = Some(format!("missing array `{name}`")),
        }
        idx += 1;
    });
    if let Some(e) = err {
        return Err(Error::Checkpoint(e));
    }
    if idx != arrays.len() {
        return Err(Error::Checkpoint(format!("{} unexpected arrays", arrays.len() - idx)));
    }
    Ok(())
}
