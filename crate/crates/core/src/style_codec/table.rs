use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sse_tensor::{Scalar, Tensor};

use super::region::{RegionId, RegionLayout};
use crate::error::{invalid, CoreError, Result};

/// Where a region's style code was pooled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleSource {
    /// Visible pixels of the erased input.
    ErasedImage,
    /// The unmasked training image, for regions erased entirely.
    OriginalImage,
    /// A user-chosen region of another scene, for regions erased entirely.
    ExternalReference,
}

impl StyleSource {
    pub fn is_fallback(&self) -> bool {
        !matches!(self, StyleSource::ErasedImage)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleEntry {
    pub style: Vec<f32>,
    pub valid_ratio: f32,
    pub source: StyleSource,
}

/// One style code per region of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleTable {
    pub style_dim: usize,
    pub entries: BTreeMap<RegionId, StyleEntry>,
}

impl StyleTable {
    pub fn new(style_dim: usize) -> Self {
        Self { style_dim, entries: BTreeMap::new() }
    }

    pub fn get(&self, id: RegionId) -> Result<&StyleEntry> {
        self.entries.get(&id).ok_or(CoreError::MissingRegion(id))
    }

    pub fn validate(&self) -> Result<()> {
        for (id, e) in &self.entries {
            if e.style.len() != self.style_dim {
                return Err(invalid("style table", format!("{id}: style of length {} in a table of dim {}", e.style.len(), self.style_dim)));
            }
            if !e.style.iter().all(|v| v.is_finite()) {
                return Err(invalid("style table", format!("{id}: non-finite style")));
            }
            if !(0.0..=1.0).contains(&e.valid_ratio) {
                return Err(invalid("style table", format!("{id}: valid ratio {}", e.valid_ratio)));
            }
            if e.source.is_fallback() && e.valid_ratio != 1.0 {
                return Err(invalid("style table", format!("{id}: fallback entry with ratio {}", e.valid_ratio)));
            }
        }
        Ok(())
    }

    /// Style rows in layout order, `R × D`.
    pub fn matrix_for<T: Scalar>(&self, layout: &RegionLayout) -> Result<Tensor<T>> {
        let mut data = Vec::with_capacity(layout.len() * self.style_dim);
        for &id in layout.ids() {
            data.extend(self.get(id)?.style.iter().map(|&v| T::of(v as f64)));
        }
        Ok(Tensor::new(vec![layout.len(), self.style_dim], data)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }
}

pub fn encode_f32_base64(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f32_base64(s: &str) -> Result<Vec<f32>> {
    let bytes = B64.decode(s).map_err(|e| CoreError::Format(format!("base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(CoreError::Format(format!("style payload of {} bytes is not a whole number of f32", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    region: RegionId,
    valid_ratio: f32,
    source: StyleSource,
    /// Little-endian f32 values, base64.
    style: String,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    style_dim: usize,
    entries: Vec<EntryJson>,
}

impl Serialize for StyleTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TableJson {
            style_dim: self.style_dim,
            entries: self
                .entries
                .iter()
                .map(|(&region, e)| EntryJson { region, valid_ratio: e.valid_ratio, source: e.source, style: encode_f32_base64(&e.style) })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StyleTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let t = TableJson::deserialize(d)?;
        let mut entries = BTreeMap::new();
        for e in t.entries {
            let style = decode_f32_base64(&e.style).map_err(serde::de::Error::custom)?;
            if entries.insert(e.region, StyleEntry { style, valid_ratio: e.valid_ratio, source: e.source }).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate region {}", e.region)));
            }
        }
        Ok(StyleTable { style_dim: t.style_dim, entries })
    }
}
