use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sse_tensor::ops::avgpool2_data;

use crate::error::{invalid, CoreError, Result};
use crate::shapeworld::LabeledScene;

/// A style region: one stuff class, or one thing instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionId {
    Stuff(u16),
    Thing(u16),
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionId::Stuff(c) => write!(f, "stuff:{c}"),
            RegionId::Thing(i) => write!(f, "thing:{i}"),
        }
    }
}

impl FromStr for RegionId {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid("region id", format!("`{s}` is not of the form stuff:N or thing:N"));
        let (kind, num) = s.split_once(':').ok_or_else(bad)?;
        let n: u16 = num.parse().map_err(|_| bad())?;
        match kind {
            "stuff" => Ok(RegionId::Stuff(n)),
            "thing" if n > 0 => Ok(RegionId::Thing(n)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for RegionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-pixel region ids: the instance where there is one, else the class.
pub fn region_map(semantic: &[u16], instance: &[u16]) -> Result<Vec<RegionId>> {
    if semantic.len() != instance.len() {
        return Err(invalid("region map", format!("{} semantic vs {} instance labels", semantic.len(), instance.len())));
    }
    Ok(semantic
        .iter()
        .zip(instance)
        .map(|(&c, &i)| if i > 0 { RegionId::Thing(i) } else { RegionId::Stuff(c) })
        .collect())
}

impl RegionId {
    /// Semantic class of this region in `scene`, if the region occurs there.
    pub fn class_in(&self, scene: &LabeledScene) -> Option<u16> {
        match *self {
            RegionId::Stuff(c) => scene.semantic.iter().zip(&scene.instance).any(|(&s, &i)| s == c && i == 0).then_some(c),
            RegionId::Thing(i) => scene.instance_class(i),
        }
    }
}

/// Regions of `class` across `pool`, as `(scene index, region)` in pool
/// order, skipping the scene at `exclude`.
pub fn reference_candidates(pool: &[LabeledScene], class: u16, exclude: Option<usize>) -> Vec<(usize, RegionId)> {
    let mut out = Vec::new();
    for (s, scene) in pool.iter().enumerate() {
        if Some(s) == exclude {
            continue;
        }
        let mut ids: Vec<RegionId> = scene
            .semantic
            .iter()
            .zip(&scene.instance)
            .filter(|(&c, _)| c == class)
            .map(|(&c, &i)| if i > 0 { RegionId::Thing(i) } else { RegionId::Stuff(c) })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        out.extend(ids.into_iter().map(|id| (s, id)));
    }
    out
}

/// Compact form of a region map: the sorted distinct regions and each pixel's
/// index into them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionLayout {
    pub width: usize,
    pub height: usize,
    ids: Vec<RegionId>,
    index: Vec<u32>,
}

impl RegionLayout {
    pub fn from_grid(width: usize, height: usize, grid: &[RegionId]) -> Result<Self> {
        if grid.len() != width * height {
            return Err(invalid("region layout", format!("{} ids for {width}×{height}", grid.len())));
        }
        let mut ids: Vec<RegionId> = grid.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let lookup: BTreeMap<RegionId, u32> = ids.iter().enumerate().map(|(i, &r)| (r, i as u32)).collect();
        let index = grid.iter().map(|r| lookup[r]).collect();
        Ok(Self { width, height, ids, index })
    }

    pub fn from_maps(width: usize, height: usize, semantic: &[u16], instance: &[u16]) -> Result<Self> {
        Self::from_grid(width, height, &region_map(semantic, instance)?)
    }

    pub fn of_scene(scene: &LabeledScene) -> Result<Self> {
        Self::from_maps(scene.width, scene.height, &scene.semantic, &scene.instance)
    }

    pub fn ids(&self) -> &[RegionId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.index.len()
    }

    /// Region index of each pixel.
    pub fn index(&self) -> &[u32] {
        &self.index
    }

    pub fn region_at(&self, p: usize) -> RegionId {
        self.ids[self.index[p] as usize]
    }

    pub fn position(&self, id: RegionId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.ids.len()];
        self.index.iter().for_each(|&r| counts[r as usize] += 1);
        counts
    }

    /// Number of pixels of each region that are `valid`.
    pub fn valid_counts(&self, valid: &[bool]) -> Result<Vec<usize>> {
        if valid.len() != self.pixels() {
            return Err(invalid("valid counts", format!("{} flags for {} pixels", valid.len(), self.pixels())));
        }
        let mut counts = vec![0; self.ids.len()];
        self.index.iter().zip(valid).filter(|(_, &v)| v).for_each(|(&r, _)| counts[r as usize] += 1);
        Ok(counts)
    }

    pub fn grid(&self) -> Vec<RegionId> {
        self.index.iter().map(|&r| self.ids[r as usize]).collect()
    }

    pub fn coverage(&self) -> RegionCoverage {
        let n = self.pixels();
        let mut data = vec![0f32; self.ids.len() * n];
        for (p, &r) in self.index.iter().enumerate() {
            data[r as usize * n + p] = 1.0;
        }
        RegionCoverage { regions: self.ids.len(), width: self.width, height: self.height, data }
    }
}

/// Fraction of each site covered by each region, `R × H × W`. One-hot at full
/// resolution; area-averaged below it.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionCoverage {
    pub regions: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RegionCoverage {
    pub fn downsample(&self) -> Result<Self> {
        if self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(invalid("coverage downsample", format!("odd extent {}×{}", self.width, self.height)));
        }
        Ok(Self {
            regions: self.regions,
            width: self.width / 2,
            height: self.height / 2,
            data: avgpool2_data(&self.data, self.regions, self.height, self.width),
        })
    }

    pub fn plane(&self, r: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[r * n..(r + 1) * n]
    }
}
