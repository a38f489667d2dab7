//! Erase masks: the four evaluation protocols and the training policy.
//!
//! Polarity is fixed: 1 marks an erased pixel to be generated, 0 a visible one.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoreError, Result};
use crate::shapeworld::pngio::{decode_gray8, encode_gray8};
use crate::shapeworld::LabeledScene;

/// Bumped whenever the free-form stroke procedure changes.
pub const FREE_FORM_PROTOCOL_VERSION: u32 = 1;
pub const FREE_FORM_MIN_FRACTION: f64 = 0.1;
pub const FREE_FORM_MAX_FRACTION: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![1; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(invalid("mask", format!("{} values for {width}×{height}", data.len())));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(invalid("mask", format!("value {v} is not 0 or 1")));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..width * height).map(|p| f(p % width, p / width) as u8).collect();
        Self { width, height, data }
    }

    pub fn is_erased(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn erased_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn erased_fraction(&self) -> f64 {
        self.erased_count() as f64 / self.data.len() as f64
    }

    /// Per-pixel visibility, the complement of the mask.
    pub fn valid(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v == 0).collect()
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(invalid("mask union", "size mismatch"));
        }
        Ok(Self { width: self.width, height: self.height, data: self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect() })
    }

    /// 8-bit grayscale, 255 = erased.
    pub fn write_png(&self, w: impl Write) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| v * 255).collect();
        encode_gray8(w, self.width, self.height, &bytes)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_png(&mut out)?;
        Ok(out)
    }

    /// Accepts only 0 and 255.
    pub fn read_png(r: impl Read) -> Result<Self> {
        let d = decode_gray8(r)?;
        let data = d
            .data
            .iter()
            .map(|&v| match v {
                0 => Ok(0),
                255 => Ok(1),
                other => Err(CoreError::Format(format!("mask pixel value {other}, expected 0 or 255"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { width: d.width, height: d.height, data })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskKind {
    #[serde(rename = "freeform")]
    FreeForm,
    #[serde(rename = "extension")]
    Extension,
    #[serde(rename = "outpainting")]
    Outpainting,
    #[serde(rename = "addobj")]
    AddObject,
}

impl MaskKind {
    pub const ALL: [MaskKind; 4] = [MaskKind::FreeForm, MaskKind::Extension, MaskKind::Outpainting, MaskKind::AddObject];

    pub fn as_str(&self) -> &'static str {
        match self {
            MaskKind::FreeForm => "freeform",
            MaskKind::Extension => "extension",
            MaskKind::Outpainting => "outpainting",
            MaskKind::AddObject => "addobj",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        MaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid("mask kind", format!("`{s}` is not one of freeform, extension, outpainting, addobj")))
    }
}

fn stamp_disc(mask: &mut BinaryMask, cx: f64, cy: f64, r: f64) {
    let (w, h) = (mask.width as isize, mask.height as isize);
    let (x0, x1) = ((cx - r).floor() as isize, (cx + r).ceil() as isize);
    let (y0, y1) = ((cy - r).floor() as isize, (cy + r).ceil() as isize);
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in x0.max(0)..=x1.min(w - 1) {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                mask.data[y as usize * mask.width + x as usize] = 1;
            }
        }
    }
}

fn free_form_attempt(rng: &mut ChaCha8Rng, width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::zeros(width, height);
    let scale = width.min(height) as f64 / 64.0;
    for _ in 0..rng.gen_range(1..=4) {
        let radius = rng.gen_range(2.0..=6.0) * scale;
        let (mut x, mut y) = (rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64));
        let mut angle = rng.gen_range(0.0..std::f64::consts::TAU);
        for _ in 0..rng.gen_range(4..=10) {
            angle += rng.gen_range(-1.2..1.2);
            let len = rng.gen_range(4.0..12.0) * scale;
            let (nx, ny) = (
                (x + len * angle.cos()).clamp(0.0, width as f64 - 1.0),
                (y + len * angle.sin()).clamp(0.0, height as f64 - 1.0),
            );
            let steps = (len / (radius / 2.0)).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                stamp_disc(&mut mask, x + t * (nx - x), y + t * (ny - y), radius);
            }
            (x, y) = (nx, ny);
        }
    }
    for _ in 0..rng.gen_range(0..=2) {
        let rw = (rng.gen_range(0.1..0.3) * width as f64) as usize;
        let rh = (rng.gen_range(0.1..0.3) * height as f64) as usize;
        let (x0, y0) = (rng.gen_range(0..width - rw), rng.gen_range(0..height - rh));
        for y in y0..y0 + rh {
            mask.data[y * width + x0..y * width + x0 + rw].fill(1);
        }
    }
    mask
}

/// Union of random thick strokes and rectangles, regenerated until the erased
/// fraction lies in [0.1, 0.5].
pub fn free_form_mask(seed: u64, height: usize, width: usize) -> Result<BinaryMask> {
    if height < 32 || width < 32 {
        return Err(invalid("free-form mask", format!("needs at least 32×32, got {width}×{height}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mask = free_form_attempt(&mut rng, width, height);
        if (FREE_FORM_MIN_FRACTION..=FREE_FORM_MAX_FRACTION).contains(&mask.erased_fraction()) {
            return Ok(mask);
        }
    }
}

/// Left half erased.
pub fn extension_mask(height: usize, width: usize) -> Result<BinaryMask> {
    if width % 2 != 0 || width == 0 || height == 0 {
        return Err(invalid("extension mask", format!("width must be even and positive, got {width}")));
    }
    Ok(BinaryMask::from_fn(width, height, |x, _| x < width / 2))
}

/// Everything erased except the centered half-size rectangle.
pub fn outpainting_mask(height: usize, width: usize) -> Result<BinaryMask> {
    if height % 4 != 0 || width % 4 != 0 || height == 0 || width == 0 {
        return Err(invalid("outpainting mask", format!("extents must be positive multiples of 4, got {width}×{height}")));
    }
    let (xs, ys) = (width / 4..3 * width / 4, height / 4..3 * height / 4);
    Ok(BinaryMask::from_fn(width, height, |x, y| !(xs.contains(&x) && ys.contains(&y))))
}

/// Tight bounding rectangle of one instance.
pub fn adding_object_mask(instance: &[u16], height: usize, width: usize, id: u16) -> Result<BinaryMask> {
    if instance.len() != width * height {
        return Err(invalid("adding-object mask", "instance map size mismatch"));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
    for (p, _) in instance.iter().enumerate().filter(|(_, &i)| i == id && id > 0) {
        let (x, y) = (p % width, p / width);
        (x0, x1, y0, y1) = (x0.min(x), x1.max(x), y0.min(y), y1.max(y));
    }
    if x0 == usize::MAX {
        return Err(invalid("adding-object mask", format!("instance {id} not present")));
    }
    Ok(BinaryMask::from_fn(width, height, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y)))
}

/// Mask of the given protocol for a scene. For adding-object masks the
/// instance is drawn from `seed`.
pub fn mask_for_scene(kind: MaskKind, seed: u64, scene: &LabeledScene) -> Result<BinaryMask> {
    let (h, w) = (scene.height, scene.width);
    match kind {
        MaskKind::FreeForm => free_form_mask(seed, h, w),
        MaskKind::Extension => extension_mask(h, w),
        MaskKind::Outpainting => outpainting_mask(h, w),
        MaskKind::AddObject => {
            // ids can have gaps after relabelling; draw among those present
            let mut present = vec![false; scene.instance_count() as usize + 1];
            scene.instance.iter().for_each(|&i| present[i as usize] = true);
            let ids: Vec<u16> = (1..present.len()).filter(|&i| present[i]).map(|i| i as u16).collect();
            if ids.is_empty() {
                return Err(invalid("adding-object mask", "scene has no instances"));
            }
            let id = ids[ChaCha8Rng::seed_from_u64(seed).gen_range(0..ids.len())];
            adding_object_mask(&scene.instance, h, w, id)
        }
    }
}

/// Training policy: uniform over the four protocols.
pub fn training_mask(seed: u64, scene: &LabeledScene) -> Result<(MaskKind, BinaryMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = MaskKind::ALL[rng.gen_range(0..4)];
    let kind = if kind == MaskKind::AddObject && scene.instance_count() == 0 { MaskKind::FreeForm } else { kind };
    Ok((kind, mask_for_scene(kind, rng.gen(), scene)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_erases_left_half() {
        let m = extension_mask(64, 64).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(m.is_erased(x, y), x < 32);
            }
        }
        assert_eq!(m.erased_fraction(), 0.5);
        assert!(extension_mask(64, 63).is_err());
    }

    #[test]
    fn outpainting_keeps_center_quarter() {
        let m = outpainting_mask(64, 64).unwrap();
        assert_eq!(m.erased_fraction(), 0.75);
        assert!(!m.is_erased(16, 16) && !m.is_erased(47, 47));
        assert!(m.is_erased(15, 16) && m.is_erased(48, 47));
        assert!(outpainting_mask(62, 64).is_err());
    }

    #[test]
    fn seeded_object_choice_skips_missing_ids() {
        let scene = crate::shapeworld::generate_scene(3, 32).unwrap();
        let mut instance = scene.instance.clone();
        let top = scene.instance_count();
        assert!(top >= 2, "need a gap below the last id");
        // move every instance except the last to id 0 so only `top` remains
        let semantic: Vec<u16> = scene.semantic.clone();
        instance.iter_mut().filter(|i| **i != top).for_each(|i| *i = 0);
        let stuff = crate::shapeworld::ClassCatalog::default().ids_of(crate::shapeworld::ClassKind::Stuff)[0];
        let semantic: Vec<u16> = semantic.iter().zip(&instance).map(|(&s, &i)| if i == 0 { stuff } else { s }).collect();
        let gappy = LabeledScene::from_parts(32, 32, scene.image.clone(), semantic, instance, 3).unwrap();
        for seed in 0..20 {
            let m = mask_for_scene(MaskKind::AddObject, seed, &gappy).unwrap();
            assert_eq!(m, adding_object_mask(&gappy.instance, 32, 32, top).unwrap());
        }
    }

    #[test]
    fn adding_object_examples() {
        let (w, h) = (5, 4);
        let mut inst = vec![0u16; w * h];
        inst[w + 1] = 1;
        inst[2 * w + 3] = 1;
        inst[3 * w + 4] = 2;
        let m = adding_object_mask(&inst, h, w, 1).unwrap();
        let expect = BinaryMask::from_fn(w, h, |x, y| (1..=3).contains(&x) && (1..=2).contains(&y));
        assert_eq!(m, expect);
        assert_eq!(adding_object_mask(&inst, h, w, 2).unwrap().erased_count(), 1);
        assert!(adding_object_mask(&inst, h, w, 3).is_err());
    }

    #[test]
    fn free_form_is_deterministic_and_bounded() {
        let a = free_form_mask(11, 64, 64).unwrap();
        assert_eq!(a, free_form_mask(11, 64, 64).unwrap());
        assert!((0.1..=0.5).contains(&a.erased_fraction()));
        assert!(free_form_mask(1, 16, 64).is_err());
    }

    #[test]
    fn png_round_trip_and_bad_values() {
        let m = free_form_mask(3, 32, 48).unwrap();
        let bytes = m.to_png_bytes().unwrap();
        assert_eq!(BinaryMask::read_png(bytes.as_slice()).unwrap(), m);
        assert!(BinaryMask::read_png(&bytes[..bytes.len() / 2]).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MaskKind::ALL {
            assert_eq!(k.as_str().parse::<MaskKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
    }
}
