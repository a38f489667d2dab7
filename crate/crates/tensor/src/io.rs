//! Flat binary tensor format.
//!
//! ```text
//! "TNSR" | version: u16 | rank: u8 | extents: rank × u32 | payload: f32 × numel
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::{Scalar, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"TNSR";
pub const TENSOR_FORMAT_VERSION: u16 = 1;

fn format_err(msg: impl Into<String>) -> TensorError {
    TensorError::Format(msg.into())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format!("truncated {what}")),
        _ => TensorError::Io(e),
    })
}

/// Encode as f32 regardless of the in-memory scalar type.
pub fn write_tensor<T: Scalar>(w: &mut impl Write, t: &Tensor<T>) -> Result<()> {
    if t.rank() > u8::MAX as usize {
        return Err(format_err("rank exceeds 255"));
    }
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&TENSOR_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[t.rank() as u8])?;
    for &e in t.shape() {
        let e = u32::try_from(e).map_err(|_| format_err("extent exceeds u32"))?;
        w.write_all(&e.to_le_bytes())?;
    }
    let mut payload = Vec::with_capacity(t.numel() * 4);
    for v in t.data() {
        payload.extend_from_slice(&(v.f64() as f32).to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_tensor<T: Scalar>(r: &mut impl Read) -> Result<Tensor<T>> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != TENSOR_MAGIC {
        return Err(format_err(format!("bad magic {magic:?}")));
    }
    let mut ver = [0u8; 2];
    read_exact(r, &mut ver, "version")?;
    let version = u16::from_le_bytes(ver);
    if version != TENSOR_FORMAT_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let mut rank = [0u8; 1];
    read_exact(r, &mut rank, "rank")?;
    let mut shape = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        let mut e = [0u8; 4];
        read_exact(r, &mut e, "extents")?;
        shape.push(u32::from_le_bytes(e) as usize);
    }
    let numel = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e)).ok_or_else(|| format_err("extent overflow"))?;
    let mut payload = vec![0u8; numel.checked_mul(4).ok_or_else(|| format_err("payload overflow"))?];
    read_exact(r, &mut payload, "payload")?;
    let data = payload.chunks_exact(4).map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)).collect();
    Tensor::new(shape, data)
}
