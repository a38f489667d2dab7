use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::CATALOG_VERSION;
use super::pngio::{decode_gray16, decode_rgb8, dequantize, encode_gray16, encode_rgb8, quantize_image};
use super::scene::{generate_scene, LabeledScene};
use crate::error::{CoreError, Result};

#[derive(Serialize, Deserialize)]
struct SceneMeta {
    seed: u64,
    width: usize,
    height: usize,
    catalog_version: u32,
}

/// Write `image.png` (RGB8), `semantic.png` and `instance.png` (16-bit gray)
/// and `scene.json` into `dir`.
pub fn write_scene(dir: &Path, scene: &LabeledScene) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (w, h) = (scene.width, scene.height);
    encode_rgb8(BufWriter::new(File::create(dir.join("image.png"))?), w, h, &quantize_image(&scene.image))?;
    encode_gray16(BufWriter::new(File::create(dir.join("semantic.png"))?), w, h, &scene.semantic)?;
    encode_gray16(BufWriter::new(File::create(dir.join("instance.png"))?), w, h, &scene.instance)?;
    let meta = SceneMeta { seed: scene.seed, width: w, height: h, catalog_version: CATALOG_VERSION };
    fs::write(dir.join("scene.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn read_scene(dir: &Path) -> Result<LabeledScene> {
    let meta: SceneMeta = serde_json::from_slice(&fs::read(dir.join("scene.json"))?)?;
    let open = |name: &str| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };
    let image = decode_rgb8(open("image.png")?)?;
    let semantic = decode_gray16(open("semantic.png")?)?;
    let instance = decode_gray16(open("instance.png")?)?;
    for (name, w, h) in [("image", image.width, image.height), ("semantic", semantic.width, semantic.height), ("instance", instance.width, instance.height)] {
        if (w, h) != (meta.width, meta.height) {
            return Err(CoreError::Format(format!("{name}.png is {w}×{h}, scene.json says {}×{}", meta.width, meta.height)));
        }
    }
    let pixels = image.data.into_iter().map(dequantize).collect();
    LabeledScene::from_parts(meta.width, meta.height, pixels, semantic.data, instance.data, meta.seed)
}

/// A corpus is fully determined by its seed list and resolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seeds: Vec<u64>,
    pub resolution: usize,
    pub catalog_version: u32,
}

impl CorpusManifest {
    /// `count` consecutive seeds derived from `base_seed`.
    pub fn new(base_seed: u64, count: usize, resolution: usize) -> Self {
        let seeds = (0..count as u64).map(|i| base_seed.wrapping_mul(1_000_003).wrapping_add(i)).collect();
        Self { seeds, resolution, catalog_version: CATALOG_VERSION }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_slice(&fs::read(path)?)?;
        if m.catalog_version != CATALOG_VERSION {
            return Err(CoreError::Format(format!("manifest catalog version {} but this build has {CATALOG_VERSION}", m.catalog_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn scenes(&self) -> Result<Vec<LabeledScene>> {
        self.seeds.iter().map(|&s| generate_scene(s, self.resolution)).collect()
    }
}
