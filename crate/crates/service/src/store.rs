//! Loaded model snapshots and scene collections.

use std::path::Path;

use sse_core::generator::{fnv1a, Checkpoint};
use sse_core::shapeworld::{read_scene, write_scene, CorpusManifest, LabeledScene};
use sse_core::Model;

use crate::error::{Result, ServiceError};

/// Seed of the default validation corpus served when no data is given.
pub const VALIDATION_BASE_SEED: u64 = 7_000;
pub const VALIDATION_SCENES: usize = 64;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENES_DIR: &str = "scenes";

/// An immutable model plus the fingerprints reported with every result.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: Model,
    /// Hash of the model parameters and config, independent of any
    /// optimizer state stored alongside them.
    pub fingerprint: String,
    pub config_fingerprint: String,
}

impl LoadedModel {
    pub fn new(model: Model) -> Result<Self> {
        let fingerprint = model.to_checkpoint()?.fingerprint()?;
        let config = serde_json::to_vec(&model.config).map_err(sse_core::CoreError::from)?;
        Ok(Self { model, fingerprint, config_fingerprint: format!("{:016x}", fnv1a(&config)) })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Self::new(Model::from_checkpoint(ckpt)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(ServiceError::NotFound(format!("checkpoint {}", path.display())));
        }
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn resolution(&self) -> usize {
        self.model.resolution()
    }
}

/// Scenes addressable by index, e.g. for browsing and style references.
#[derive(Clone, Debug, Default)]
pub struct SceneStore {
    pub scenes: Vec<LabeledScene>,
}

impl SceneStore {
    pub fn new(scenes: Vec<LabeledScene>) -> Self {
        Self { scenes }
    }

    /// The default validation corpus at `resolution`.
    pub fn validation(resolution: usize) -> Result<Self> {
        Ok(Self::new(CorpusManifest::new(VALIDATION_BASE_SEED, VALIDATION_SCENES, resolution).scenes()?))
    }

    pub fn get(&self, id: usize) -> Result<&LabeledScene> {
        self.scenes.get(id).ok_or_else(|| ServiceError::NotFound(format!("scene {id}")))
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}

/// Write a manifest and every scene's files under `dir`.
pub fn write_dataset(dir: &Path, manifest: &CorpusManifest) -> Result<()> {
    std::fs::create_dir_all(dir.join(SCENES_DIR)).map_err(sse_core::CoreError::from)?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    for (i, scene) in manifest.scenes()?.iter().enumerate() {
        write_scene(&dir.join(SCENES_DIR).join(format!("{i:05}")), scene)?;
    }
    Ok(())
}

/// Scenes from a manifest file, or from a dataset directory. A directory's
/// scene files take precedence over its manifest, so edited scenes are used
/// as written.
pub fn load_dataset(path: &Path) -> Result<Vec<LabeledScene>> {
    if path.is_file() {
        return Ok(CorpusManifest::load(path)?.scenes()?);
    }
    let scenes_dir = path.join(SCENES_DIR);
    if scenes_dir.is_dir() {
        let mut dirs: Vec<_> = std::fs::read_dir(&scenes_dir)
            .map_err(sse_core::CoreError::from)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        return dirs.iter().map(|d| Ok(read_scene(d)?)).collect();
    }
    let manifest = path.join(MANIFEST_FILE);
    if manifest.is_file() {
        return Ok(CorpusManifest::load(&manifest)?.scenes()?);
    }
    Err(ServiceError::NotFound(format!("dataset at {}", path.display())))
}
