//! Semantic edits: repaint labels, erase, and regenerate with chosen styles.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sse_core::maskgen::{adding_object_mask, mask_for_scene, BinaryMask, MaskKind};
use sse_core::model::StyleRef;
use sse_core::shapeworld::pngio::{decode_gray16, decode_gray8, decode_rgb8, dequantize, encode_gray16, rgb_png_bytes};
use sse_core::shapeworld::{ClassCatalog, ClassKind, LabeledScene};
use sse_core::style_codec::{RegionId, RegionLayout, StyleSource};

use crate::error::{FieldError, Result, ServiceError};
use crate::store::{LoadedModel, SceneStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneInput {
    /// Index into the server's scene collection.
    Id(usize),
    Inline(InlineScene),
}

/// A scene sent with the request; base64 PNGs as served by `/scenes/{id}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScene {
    /// RGB8.
    pub image_png: String,
    /// 16-bit gray class ids.
    pub semantic_png: String,
    /// 16-bit gray instance ids, 0 on stuff.
    pub instance_png: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskInput {
    /// Base64 8-bit gray PNG, 255 = erased.
    Png(String),
    /// One of the mask protocols. `seed` defaults to the request seed;
    /// `instance` picks the object for `add_object` (seeded choice otherwise).
    Generate {
        kind: MaskKind,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        instance: Option<u16>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditShape {
    /// Vertices in pixel coordinates; covers pixels whose centers lie inside
    /// (even-odd rule).
    Polygon(Vec<[f64; 2]>),
    /// Base64 8-bit gray PNG at scene size; nonzero = covered.
    Raster(String),
}

/// Repaint the covered pixels with `class`; `instance` is required (> 0)
/// for thing classes and must be 0 or absent for stuff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticEdit {
    #[serde(flatten)]
    pub shape: EditShape,
    pub class: u16,
    #[serde(default)]
    pub instance: u16,
}

/// Borrow the style of `region` in the server scene `scene`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleAssignment {
    pub scene: usize,
    pub region: RegionId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub scene: SceneInput,
    pub mask: MaskInput,
    #[serde(default)]
    pub semantic_edits: Vec<SemanticEdit>,
    /// Needed for every region left without visible pixels; assignments for
    /// other regions are reported back as unused.
    #[serde(default)]
    pub styles: BTreeMap<RegionId, StyleAssignment>,
    /// Fingerprint the request expects; a mismatch is a not-found error.
    #[serde(default)]
    pub checkpoint: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: RegionId,
    pub class: u16,
    pub valid_ratio: f32,
    pub source: StyleSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditResult {
    pub width: usize,
    pub height: usize,
    /// Base64 RGB8 PNG; equal to the input outside the mask.
    pub image_png: String,
    /// Labels after the semantic edits, base64 16-bit gray PNGs.
    pub semantic_png: String,
    pub instance_png: String,
    pub mask_png: String,
    pub regions: Vec<RegionSummary>,
    pub unused_styles: Vec<RegionId>,
    pub seed: u64,
    pub model_fingerprint: String,
    pub config_fingerprint: String,
}

/// Decoded pixels of an edit, next to the wire form.
#[derive(Clone, Debug, PartialEq)]
pub struct EditOutput {
    pub result: EditResult,
    pub scene: LabeledScene,
    pub mask: BinaryMask,
    /// `H × W × 3` in [0, 1].
    pub image: Vec<f32>,
}

pub fn b64_decode(s: &str, path: &str) -> Result<Vec<u8>> {
    B64.decode(s).map_err(|e| ServiceError::field(path, format!("invalid base64: {e}")))
}

pub fn b64_encode(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub fn gray16_png(width: usize, height: usize, data: &[u16]) -> Result<String> {
    let mut out = Vec::new();
    encode_gray16(&mut out, width, height, data)?;
    Ok(b64_encode(&out))
}

fn inline_scene(s: &InlineScene) -> Result<LabeledScene> {
    let bad = |path: &str, e: sse_core::CoreError| ServiceError::field(path, e.to_string());
    let image = decode_rgb8(b64_decode(&s.image_png, "scene.inline.image_png")?.as_slice()).map_err(|e| bad("scene.inline.image_png", e))?;
    let semantic =
        decode_gray16(b64_decode(&s.semantic_png, "scene.inline.semantic_png")?.as_slice()).map_err(|e| bad("scene.inline.semantic_png", e))?;
    let instance =
        decode_gray16(b64_decode(&s.instance_png, "scene.inline.instance_png")?.as_slice()).map_err(|e| bad("scene.inline.instance_png", e))?;
    for (path, w, h) in [("scene.inline.semantic_png", semantic.width, semantic.height), ("scene.inline.instance_png", instance.width, instance.height)] {
        if (w, h) != (image.width, image.height) {
            return Err(ServiceError::field(path, format!("{w}×{h} but the image is {}×{}", image.width, image.height)));
        }
    }
    let pixels = image.data.into_iter().map(dequantize).collect();
    Ok(LabeledScene::from_parts(image.width, image.height, pixels, semantic.data, instance.data, 0)?)
}

/// Pixel centers inside the polygon, even-odd rule.
pub fn rasterize_polygon(points: &[[f64; 2]], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; width * height];
    if points.len() < 3 {
        return out;
    }
    for y in 0..height {
        let cy = y as f64 + 0.5;
        for x in 0..width {
            let cx = x as f64 + 0.5;
            let mut inside = false;
            let mut j = points.len() - 1;
            for i in 0..points.len() {
                let ([xi, yi], [xj, yj]) = (points[i], points[j]);
                if (yi > cy) != (yj > cy) && cx < (xj - xi) * (cy - yi) / (yj - yi) + xi {
                    inside = !inside;
                }
                j = i;
            }
            out[y * width + x] = inside;
        }
    }
    out
}

fn edit_coverage(edit: &SemanticEdit, i: usize, width: usize, height: usize) -> Result<Vec<bool>> {
    match &edit.shape {
        EditShape::Polygon(points) => {
            if points.len() < 3 {
                return Err(ServiceError::field(format!("semantic_edits[{i}].polygon"), "needs at least 3 vertices"));
            }
            if points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(ServiceError::field(format!("semantic_edits[{i}].polygon"), "non-finite vertex"));
            }
            Ok(rasterize_polygon(points, width, height))
        }
        EditShape::Raster(png) => {
            let path = format!("semantic_edits[{i}].raster");
            let d = decode_gray8(b64_decode(png, &path)?.as_slice()).map_err(|e| ServiceError::field(&path, e.to_string()))?;
            if (d.width, d.height) != (width, height) {
                return Err(ServiceError::field(path, format!("{}×{} but the scene is {width}×{height}", d.width, d.height)));
            }
            Ok(d.data.iter().map(|&v| v > 0).collect())
        }
    }
}

/// Apply the edits in order and rebuild the edge map.
pub fn apply_semantic_edits(scene: &LabeledScene, edits: &[SemanticEdit], catalog: &ClassCatalog) -> Result<LabeledScene> {
    let mut errors = Vec::new();
    for (i, e) in edits.iter().enumerate() {
        match catalog.get(e.class).map(|c| c.kind) {
            None => errors.push(FieldError::new(format!("semantic_edits[{i}].class"), format!("unknown class {}", e.class))),
            Some(ClassKind::Thing) if e.instance == 0 => {
                errors.push(FieldError::new(format!("semantic_edits[{i}].instance"), "thing classes need an instance id > 0"))
            }
            Some(ClassKind::Stuff) if e.instance != 0 => {
                errors.push(FieldError::new(format!("semantic_edits[{i}].instance"), "stuff classes take no instance id"))
            }
            _ => {}
        }
    }
    if !errors.is_empty() {
        return Err(ServiceError::Invalid(errors));
    }
    let (mut semantic, mut instance) = (scene.semantic.clone(), scene.instance.clone());
    for (i, e) in edits.iter().enumerate() {
        for (p, covered) in edit_coverage(e, i, scene.width, scene.height)?.into_iter().enumerate() {
            if covered {
                semantic[p] = e.class;
                instance[p] = e.instance;
            }
        }
    }
    Ok(LabeledScene::from_parts(scene.width, scene.height, scene.image.clone(), semantic, instance, scene.seed)?)
}

fn request_mask(req: &EditRequest, scene: &LabeledScene) -> Result<BinaryMask> {
    match &req.mask {
        MaskInput::Png(png) => {
            let mask = BinaryMask::read_png(b64_decode(png, "mask.png")?.as_slice()).map_err(|e| ServiceError::field("mask.png", e.to_string()))?;
            if (mask.width, mask.height) != (scene.width, scene.height) {
                return Err(ServiceError::field("mask.png", format!("{}×{} but the scene is {}×{}", mask.width, mask.height, scene.width, scene.height)));
            }
            Ok(mask)
        }
        MaskInput::Generate { kind, seed, instance } => {
            let seed = seed.unwrap_or(req.seed);
            let made = match (kind, instance) {
                (MaskKind::AddObject, Some(id)) => adding_object_mask(&scene.instance, scene.height, scene.width, *id),
                _ => mask_for_scene(*kind, seed, scene),
            };
            made.map_err(|e| ServiceError::field("mask.generate", e.to_string()))
        }
    }
}

/// Run one edit against a model. Deterministic in the request.
pub fn edit(model: &LoadedModel, store: &SceneStore, req: &EditRequest) -> Result<EditOutput> {
    if let Some(fp) = &req.checkpoint {
        if *fp != model.fingerprint {
            return Err(ServiceError::NotFound(format!("checkpoint {fp}")));
        }
    }
    let base = match &req.scene {
        SceneInput::Id(id) => store.get(*id)?.clone(),
        SceneInput::Inline(s) => inline_scene(s)?,
    };
    if base.height != model.resolution() {
        return Err(ServiceError::field("scene", format!("height {} but the model runs at {}", base.height, model.resolution())));
    }
    let catalog = ClassCatalog::default();
    let scene = apply_semantic_edits(&base, &req.semantic_edits, &catalog)?;
    let mask = request_mask(req, &scene)?;

    let layout = RegionLayout::of_scene(&scene)?;
    let counts = layout.valid_counts(&mask.valid())?;
    let orphans: Vec<RegionId> = layout.ids().iter().zip(&counts).filter(|(_, &n)| n == 0).map(|(&id, _)| id).collect();
    let missing: Vec<RegionId> = orphans.iter().copied().filter(|id| !req.styles.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(ServiceError::Orphans(missing));
    }
    let mut errors = Vec::new();
    let mut refs = BTreeMap::new();
    for id in &orphans {
        let a = req.styles[id];
        match store.get(a.scene) {
            Err(_) => errors.push(FieldError::new(format!("styles.{id}.scene"), format!("no scene {}", a.scene))),
            Ok(s) if a.region.class_in(s).is_none() => {
                errors.push(FieldError::new(format!("styles.{id}.region"), format!("scene {} has no region {}", a.scene, a.region)))
            }
            Ok(s) if s.height != model.resolution() => {
                errors.push(FieldError::new(format!("styles.{id}.scene"), format!("scene {} has height {}", a.scene, s.height)))
            }
            Ok(s) => {
                refs.insert(*id, StyleRef { scene: s, region: a.region });
            }
        }
    }
    if !errors.is_empty() {
        return Err(ServiceError::Invalid(errors));
    }
    let unused_styles = req.styles.keys().copied().filter(|id| !orphans.contains(id)).collect();

    let out = model.model.infer(&scene, &mask, &refs)?;
    let regions = match &out.table {
        Some(table) => table
            .entries
            .iter()
            .map(|(id, e)| RegionSummary { region: *id, class: id.class_in(&scene).unwrap_or(0), valid_ratio: e.valid_ratio, source: e.source })
            .collect(),
        None => Vec::new(),
    };
    let (w, h) = (scene.width, scene.height);
    let result = EditResult {
        width: w,
        height: h,
        image_png: b64_encode(&rgb_png_bytes(w, h, &out.image)?),
        semantic_png: gray16_png(w, h, &scene.semantic)?,
        instance_png: gray16_png(w, h, &scene.instance)?,
        mask_png: b64_encode(&mask.to_png_bytes()?),
        regions,
        unused_styles,
        seed: req.seed,
        model_fingerprint: model.fingerprint.clone(),
        config_fingerprint: model.config_fingerprint.clone(),
    };
    Ok(EditOutput { result, scene, mask, image: out.image })
}
