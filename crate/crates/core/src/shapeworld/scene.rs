use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::catalog::{ClassCatalog, ClassKind};
use super::edges::compute_edge_map;
use crate::error::{invalid, Result};

pub const SUPPORTED_RESOLUTIONS: [usize; 4] = [32, 64, 128, 256];

/// Image plus aligned label maps. The image is row-major `H×W×3` in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScene {
    pub width: usize,
    pub height: usize,
    pub image: Vec<f32>,
    pub semantic: Vec<u16>,
    pub instance: Vec<u16>,
    pub edges: Vec<u8>,
    pub seed: u64,
}

impl LabeledScene {
    /// Assemble a scene, deriving the edge map from the label maps.
    pub fn from_parts(width: usize, height: usize, image: Vec<f32>, semantic: Vec<u16>, instance: Vec<u16>, seed: u64) -> Result<Self> {
        let n = width * height;
        if image.len() != 3 * n || semantic.len() != n || instance.len() != n {
            return Err(invalid(
                "scene",
                format!("{width}×{height} needs {} image values and {n} labels, got {}/{}/{}", 3 * n, image.len(), semantic.len(), instance.len()),
            ));
        }
        let edges = compute_edge_map(&semantic, &instance, width, height)?;
        Ok(Self { width, height, image, semantic, instance, edges, seed })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn rgb(&self, p: usize) -> [f32; 3] {
        [self.image[3 * p], self.image[3 * p + 1], self.image[3 * p + 2]]
    }

    /// Largest instance id; ids are contiguous so this is also the count.
    pub fn instance_count(&self) -> u16 {
        self.instance.iter().copied().max().unwrap_or(0)
    }

    pub fn instance_class(&self, id: u16) -> Option<u16> {
        self.instance.iter().position(|&i| i == id).map(|p| self.semantic[p])
    }

    /// Check the label invariants against a catalog.
    pub fn validate(&self, catalog: &ClassCatalog) -> Result<()> {
        let n = self.instance_count();
        let mut seen = vec![false; n as usize + 1];
        for p in 0..self.pixels() {
            let (c, i) = (self.semantic[p], self.instance[p]);
            if catalog.get(c).is_none() {
                return Err(invalid("scene", format!("unknown class {c} at pixel {p}")));
            }
            if i > 0 && !catalog.is_thing(c) {
                return Err(invalid("scene", format!("instance {i} on stuff class {c}")));
            }
            if i == 0 && catalog.is_thing(c) {
                return Err(invalid("scene", format!("thing class {c} without instance at pixel {p}")));
            }
            seen[i as usize] = true;
        }
        if let Some(gap) = (1..=n as usize).find(|&i| !seen[i]) {
            return Err(invalid("scene", format!("instance ids not contiguous, {gap} missing")));
        }
        if self.edges != compute_edge_map(&self.semantic, &self.instance, self.width, self.height)? {
            return Err(invalid("scene", "edge map does not match labels"));
        }
        Ok(())
    }
}

/// Rendering switches; the defaults produce the training distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Per-region brightness and tint offsets.
    pub jitter: bool,
    /// Per-pixel texture noise.
    pub texture: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { jitter: true, texture: true }
    }
}

const BRIGHTNESS_JITTER: f32 = 0.06;
const TINT_JITTER: f32 = 0.03;
const MAX_INSTANCES: usize = 6;
const PLACEMENT_TRIES: usize = 24;

/// Minimum visible pixels per instance: 16 at 64×64, scaled with area.
pub fn min_instance_pixels(resolution: usize) -> usize {
    (16 * resolution * resolution / (64 * 64)).max(8)
}

pub fn generate_scene(seed: u64, resolution: usize) -> Result<LabeledScene> {
    generate_scene_with(seed, resolution, &ClassCatalog::default(), RenderOptions::default())
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Disc { cx: f32, cy: f32, r: f32 },
    Rect { cx: f32, cy: f32, hw: f32, hh: f32 },
    Triangle { cx: f32, cy: f32, r: f32 },
}

impl Shape {
    fn contains(&self, x: f32, y: f32) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { cx, cy, hw, hh } => (x - cx).abs() <= hw && (y - cy).abs() <= hh,
            Shape::Triangle { cx, cy, r } => {
                let top = cy - r;
                y >= top && y <= cy + r && (x - cx).abs() <= (y - top) / 2.0
            }
        }
    }
}

/// Layout and labels depend only on the seed; `opts` only affects colors.
pub fn generate_scene_with(seed: u64, resolution: usize, catalog: &ClassCatalog, opts: RenderOptions) -> Result<LabeledScene> {
    if !SUPPORTED_RESOLUTIONS.contains(&resolution) {
        return Err(invalid("generate_scene", format!("resolution {resolution} not in {SUPPORTED_RESOLUTIONS:?}")));
    }
    let (w, h) = (resolution, resolution);
    let res = resolution as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // stuff bands with wavy boundaries
    let mut stuff = catalog.ids_of(ClassKind::Stuff);
    stuff.shuffle(&mut rng);
    let n_bands = rng.gen_range(2..=4usize).min(stuff.len());
    let boundaries: Vec<(f32, f32, f32, f32)> = (1..n_bands)
        .map(|b| {
            let cell = res / n_bands as f32;
            let base = cell * b as f32 + rng.gen_range(-0.25..0.25) * cell;
            let amp = rng.gen_range(0.0..0.05) * res;
            let period = rng.gen_range(0.5..1.5) * res;
            let phase = rng.gen_range(0.0..std::f32::consts::TAU);
            (base, amp, period, phase)
        })
        .collect();
    let mut band = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            band[y * w + x] = boundaries
                .iter()
                .filter(|(base, amp, period, phase)| py > base + amp * (std::f32::consts::TAU * px / period + phase).sin())
                .count() as u8;
        }
    }
    let mut semantic: Vec<u16> = band.iter().map(|&b| stuff[b as usize]).collect();
    let mut instance = vec![0u16; w * h];

    // thing instances, each placement accepted only if every instance keeps enough visible pixels
    let things = catalog.ids_of(ClassKind::Thing);
    let min_px = min_instance_pixels(resolution);
    let target = rng.gen_range(1..=MAX_INSTANCES);
    let mut placed = 0u16;
    for _ in 0..target {
        for _ in 0..PLACEMENT_TRIES {
            let class = things[rng.gen_range(0..things.len())];
            let (cx, cy) = (rng.gen_range(0.1..0.9) * res, rng.gen_range(0.1..0.9) * res);
            let r = rng.gen_range(0.06..0.16) * res;
            let shape = match catalog.get(class).map(|c| c.name.as_str()) {
                Some("disc") => Shape::Disc { cx, cy, r },
                Some("box") => Shape::Rect { cx, cy, hw: r * rng.gen_range(0.7..1.2), hh: r * rng.gen_range(0.7..1.2) },
                _ => Shape::Triangle { cx, cy, r },
            };
            let id = placed + 1;
            let mut trial = instance.clone();
            for y in 0..h {
                for x in 0..w {
                    if shape.contains(x as f32 + 0.5, y as f32 + 0.5) {
                        trial[y * w + x] = id;
                    }
                }
            }
            let mut counts = vec![0usize; id as usize + 1];
            trial.iter().for_each(|&i| counts[i as usize] += 1);
            if counts[1..].iter().all(|&c| c >= min_px) {
                for p in 0..w * h {
                    if trial[p] == id {
                        semantic[p] = class;
                    }
                }
                instance = trial;
                placed = id;
                break;
            }
        }
    }

    // colors: stuff offsets per band, thing offsets per instance
    let mut style_rng = ChaCha8Rng::seed_from_u64(seed);
    style_rng.set_stream(1);
    let mut offset = || -> [f32; 3] {
        let b = style_rng.gen_range(-BRIGHTNESS_JITTER..BRIGHTNESS_JITTER);
        let mut o = [0.0; 3];
        o.iter_mut().for_each(|v| *v = b + style_rng.gen_range(-TINT_JITTER..TINT_JITTER));
        if opts.jitter { o } else { [0.0; 3] }
    };
    let band_offsets: Vec<[f32; 3]> = (0..n_bands).map(|_| offset()).collect();
    let inst_offsets: Vec<[f32; 3]> = (0..placed).map(|_| offset()).collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(2);
    let mut image = vec![0f32; 3 * w * h];
    for p in 0..w * h {
        let info = catalog.get(semantic[p]).expect("generated class ids come from the catalog");
        let off = match instance[p] {
            0 => band_offsets[band[p] as usize],
            i => inst_offsets[i as usize - 1],
        };
        for c in 0..3 {
            let n = noise_rng.gen_range(-1.0f32..1.0) * info.noise;
            let n = if opts.texture { n } else { 0.0 };
            image[3 * p + c] = (info.color[c] + off[c] + n).clamp(0.0, 1.0);
        }
    }
    LabeledScene::from_parts(w, h, image, semantic, instance, seed)
}
