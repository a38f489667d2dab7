use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sse_tensor::{Scalar, Tensor};

use super::diversity::diversity_score;
use super::fid::{frechet_distance, FeatureStats};
use super::segment::{oracle_segment, ConfusionMatrix, Scope};
use crate::convert::image_tensor;
use crate::error::{CoreError, Result};
use crate::maskgen::{mask_for_scene, BinaryMask, MaskKind};
use crate::model::{InpaintModel, StyleRef};
use crate::shapeworld::{ClassCatalog, LabeledScene};
use crate::style_codec::{reference_candidates, RegionId, RegionLayout};
use crate::training::{mask_seed, PerceptualExtractor, DEFAULT_EXTRACTOR_SEED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub kinds: Vec<MaskKind>,
    pub seed: u64,
    pub extractor_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { kinds: MaskKind::ALL.to_vec(), seed: 0, extractor_seed: DEFAULT_EXTRACTOR_SEED }
    }
}

/// Scores of one mask protocol. `fid` is desk-FID over composited frames;
/// the `_holes` scores count erased pixels only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub fid: f64,
    pub miou: f64,
    pub acc: f64,
    pub miou_holes: Option<f64>,
    pub acc_holes: Option<f64>,
    /// Mean over scenes whose erased regions had two reference candidates.
    pub diversity: Option<f64>,
    pub scenes: usize,
    /// Scenes the protocol or the reference pool could not serve.
    pub skipped: usize,
}

/// `{mask kind → scores}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalReport(pub BTreeMap<MaskKind, KindReport>);

/// Pooled extractor features of `H × W × 3` images in [0, 1].
pub fn image_features<T: Scalar>(extractor: &PerceptualExtractor<T>, images: &[&[f32]], width: usize, height: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(16) {
        let batch = chunk.iter().map(|im| image_tensor::<T>(width, height, im)).collect::<Result<Vec<_>>>()?;
        out.extend(extractor.pooled_features(&Tensor::concat(&batch, 0)?)?);
    }
    Ok(out)
}

/// A style source from `pool` for every region of `scene` the mask erases
/// completely, picking the `variant`-th candidate of the region's class
/// (cyclically). `None` when some class has no candidate.
pub fn orphan_references(
    scene: &LabeledScene,
    mask: &BinaryMask,
    pool: &[LabeledScene],
    exclude: Option<usize>,
    variant: usize,
) -> Result<Option<BTreeMap<RegionId, (usize, RegionId)>>> {
    let layout = RegionLayout::of_scene(scene)?;
    let counts = layout.valid_counts(&mask.valid())?;
    let mut refs = BTreeMap::new();
    for (&id, &n) in layout.ids().iter().zip(&counts) {
        if n > 0 {
            continue;
        }
        let class = id.class_in(scene).ok_or(CoreError::MissingRegion(id))?;
        let cands = reference_candidates(pool, class, exclude);
        if cands.is_empty() {
            return Ok(None);
        }
        refs.insert(id, cands[variant % cands.len()]);
    }
    Ok(Some(refs))
}

fn style_refs<'a>(refs: &BTreeMap<RegionId, (usize, RegionId)>, pool: &'a [LabeledScene]) -> BTreeMap<RegionId, StyleRef<'a>> {
    refs.iter().map(|(&id, &(s, region))| (id, StyleRef { scene: &pool[s], region })).collect()
}

/// Inpaint every scene under every protocol and score the results. Style
/// references for fully erased regions come from the other scenes.
pub fn evaluate<T: Scalar>(model: &InpaintModel<T>, scenes: &[LabeledScene], opts: &EvalOptions) -> Result<EvalReport> {
    let Some(first) = scenes.first() else {
        return Err(crate::error::invalid("evaluate", "no scenes"));
    };
    let (w, h) = (first.width, first.height);
    let catalog = ClassCatalog::default();
    let extractor = PerceptualExtractor::<T>::new(opts.extractor_seed)?;
    let reals: Vec<&[f32]> = scenes.iter().map(|s| s.image.as_slice()).collect();
    let real_stats = FeatureStats::from_features(&image_features(&extractor, &reals, w, h)?, opts.extractor_seed)?;
    let mut report = EvalReport::default();
    for (k, &kind) in opts.kinds.iter().enumerate() {
        let mut fakes = Vec::new();
        let (mut full, mut holes) = (ConfusionMatrix::new(catalog.len()), ConfusionMatrix::new(catalog.len()));
        let mut diversity = Vec::new();
        let mut skipped = 0;
        for (i, scene) in scenes.iter().enumerate() {
            if kind == MaskKind::AddObject && scene.instance_count() == 0 {
                skipped += 1;
                continue;
            }
            let mask = mask_for_scene(kind, mask_seed(opts.seed, k, 0, i), scene)?;
            let Some(refs) = orphan_references(scene, &mask, scenes, Some(i), 0)? else {
                skipped += 1;
                continue;
            };
            let out = model.infer(scene, &mask, &style_refs(&refs, scenes))?.image;
            let pred = oracle_segment(&out, w, h, &catalog)?;
            full.add(&pred, &scene.semantic, Scope::Full)?;
            holes.add(&pred, &scene.semantic, Scope::HolesOnly(&mask))?;
            if let Some(alt) = orphan_references(scene, &mask, scenes, Some(i), 1)?.filter(|alt| *alt != refs) {
                let other = model.infer(scene, &mask, &style_refs(&alt, scenes))?.image;
                diversity.push(diversity_score(&[&out, &other], &mask)?);
            }
            fakes.push(out);
        }
        if fakes.is_empty() {
            log::warn!("no scene could be evaluated under {kind}");
            continue;
        }
        let fake_refs: Vec<&[f32]> = fakes.iter().map(Vec::as_slice).collect();
        let fake_stats = FeatureStats::from_features(&image_features(&extractor, &fake_refs, w, h)?, opts.extractor_seed)?;
        let scores = full.scores()?;
        let hole_scores = holes.scores().ok();
        report.0.insert(
            kind,
            KindReport {
                fid: frechet_distance(&real_stats, &fake_stats)?,
                miou: scores.miou,
                acc: scores.acc,
                miou_holes: hole_scores.map(|s| s.miou),
                acc_holes: hole_scores.map(|s| s.acc),
                diversity: (!diversity.is_empty()).then(|| diversity.iter().sum::<f64>() / diversity.len() as f64),
                scenes: fakes.len(),
                skipped,
            },
        );
    }
    Ok(report)
}
