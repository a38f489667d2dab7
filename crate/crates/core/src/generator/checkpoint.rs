//! Checkpoint container.
//!
//! ```text
//! "SSEC" | version: u16 | config_len: u32 | config: JSON
//!        | count: u32 | count × (name_len: u16 | name: UTF-8 | tensor: TNSR)
//! ```
//! Integers are little-endian. Tensors are written in name order, so equal
//! checkpoints are equal byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sse_tensor::io::{read_tensor, write_tensor};
use sse_tensor::Tensor;

use crate::error::{CoreError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSEC";
pub const CHECKPOINT_VERSION: u16 = 1;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

fn take<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CoreError::Format(format!("checkpoint truncated in {what}")),
        _ => CoreError::Io(e),
    })?;
    Ok(buf)
}

fn take_vec(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CoreError::Format(format!("checkpoint truncated in {what}")),
        _ => CoreError::Io(e),
    })?;
    Ok(buf)
}

impl Checkpoint {
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let config = serde_json::to_vec(&self.config)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&u32::try_from(config.len()).map_err(|_| CoreError::Format("config too large".into()))?.to_le_bytes())?;
        w.write_all(&config)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len()).map_err(|_| CoreError::Format(format!("tensor name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        if &take::<4>(r, "magic")? != CHECKPOINT_MAGIC {
            return Err(CoreError::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes(take(r, "version")?);
        if version != CHECKPOINT_VERSION {
            return Err(CoreError::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = u32::from_le_bytes(take(r, "config length")?) as usize;
        let config = serde_json::from_slice(&take_vec(r, len, "config")?)?;
        let count = u32::from_le_bytes(take(r, "tensor count")?);
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(take(r, "tensor name")?) as usize;
            let name = String::from_utf8(take_vec(r, len, "tensor name")?).map_err(|_| CoreError::Format("tensor name is not UTF-8".into()))?;
            let t = read_tensor(r)?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(CoreError::Format(format!("duplicate tensor {name}")));
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(CoreError::Format("trailing bytes after the last tensor".into()));
        }
        Ok(Self { config, tensors })
    }

    /// Written to a temporary sibling and renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write(&mut out)?;
        Ok(out)
    }

    /// Hex FNV-1a of the serialized bytes.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(format!("{:016x}", fnv1a(&self.to_bytes()?)))
    }

    /// Tensors under `prefix`, with the prefix removed.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, Tensor<f32>> {
        self.tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut tensors = BTreeMap::new();
        tensors.insert("g/a.weight".to_string(), Tensor::from_fn(vec![2, 3], |i| i as f32 * 0.5));
        tensors.insert("g/a.bias".to_string(), Tensor::zeros(vec![2]));
        Checkpoint { config: serde_json::json!({"k": 7}), tensors }
    }

    #[test]
    fn round_trip_and_section() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"SSEC");
        let back = Checkpoint::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.section("g/").len(), 2);
        assert_eq!(c.fingerprint().unwrap(), back.fingerprint().unwrap());
    }

    #[test]
    fn truncation_and_bad_magic_are_format_errors() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [0, 3, 7, 20, bytes.len() - 1] {
            assert!(Checkpoint::read(&mut &bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read(&mut bad.as_slice()), Err(CoreError::Format(_))));
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::read(&mut long.as_slice()).is_err());
    }
}
