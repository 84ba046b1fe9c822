//! Checkpoint layout, all little-endian:
//! `b"MASKXNET"`, u32 version, six u32 shape fields (height, width,
//! in_channels, conv1, conv2, classes), u64 parameter count, then the
//! parameters as f64.

use std::path::Path;

use super::convnet::{ConvNetShape, TinyConvNet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MASKXNET";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 6 * 4 + 8;

pub fn checkpoint_bytes(model: &TinyConvNet) -> Vec<u8> {
    let s = model.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [s.height, s.width, s.in_channels, s.conv1, s.conv2, s.classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn save_checkpoint(model: &TinyConvNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TinyConvNet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<TinyConvNet> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("missing header".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let f: Vec<usize> = (0..6).map(|i| u32_at(12 + 4 * i) as usize).collect();
    let shape = ConvNetShape {
        height: f[0],
        width: f[1],
        in_channels: f[2],
        conv1: f[3],
        conv2: f[4],
        classes: f[5],
    };
    let count = u64::from_le_bytes(bytes[36..44].try_into().unwrap()) as usize;
    if count != shape.param_count() || bytes.len() != HEADER_LEN + 8 * count {
        return Err(Error::Checkpoint("parameter count mismatch".into()));
    }
    let params = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    TinyConvNet::from_params(shape, params)
}
