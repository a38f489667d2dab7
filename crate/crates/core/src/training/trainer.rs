use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sse_tensor::optim::{Adam, AdamState};
use sse_tensor::{Binder, Graph, ParamStore, Scalar, Tensor, TensorError, Var};

use super::config::TrainConfig;
use super::discriminator::{area_down, Discriminators};
use super::losses::{hinge_d, hinge_g, l1_loss, PerceptualExtractor};
use crate::convert::{image_tensor, onehot_tensor};
use crate::error::{invalid, CoreError, Result};
use crate::generator::{fnv1a, Checkpoint};
use crate::maskgen::{training_mask, BinaryMask, MaskKind};
use crate::model::{InpaintModel, Sample};
use crate::shapeworld::LabeledScene;
use crate::style_codec::{Fallback, RegionLayout, StyleSource};

pub const DISC_SECTION: &str = "disc/";
pub const ADAM_G_SECTION: &str = "adam_g/";
pub const ADAM_D_SECTION: &str = "adam_d/";
/// File name of the per-step JSON-lines log inside the output directory.
pub const LOG_FILE: &str = "train.jsonl";

/// Position in the schedule: the next batch to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub step: u64,
    pub epoch: usize,
    pub batch: usize,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub batch: usize,
    #[serde(rename = "L_adv")]
    pub l_adv: f64,
    #[serde(rename = "L_P")]
    pub l_p: f64,
    #[serde(rename = "L_1")]
    pub l_1: f64,
    /// Weighted sum of the three terms above.
    pub total: f64,
    #[serde(rename = "L_D")]
    pub l_d: f64,
    /// Style entries taken from the unmasked image.
    pub fallbacks: usize,
    pub masks: Vec<MaskKind>,
    pub seconds: f64,
}

/// Generator objective of one batch, summed over the active scales.
pub struct GeneratorLoss<'g, T: Scalar> {
    pub total: Var<'g, T>,
    pub adv: f64,
    pub perceptual: f64,
    pub l1: f64,
    /// Stage outputs, coarse to fine.
    pub fakes: Vec<Var<'g, T>>,
    pub reals: Vec<Tensor<T>>,
    pub layouts: Vec<Tensor<T>>,
    pub fallbacks: usize,
}

/// Deterministic seed for one sample's mask.
pub fn mask_seed(seed: u64, epoch: usize, batch: usize, index: usize) -> u64 {
    let mut bytes = Vec::with_capacity(32);
    for v in [seed, epoch as u64, batch as u64, index as u64] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a(&bytes)
}

/// Scene order of one epoch.
pub fn epoch_order(seed: u64, epoch: usize, scenes: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scenes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    order
}

fn non_finite(step: u64, e: CoreError) -> CoreError {
    match e {
        CoreError::Tensor(TensorError::NonFinite { op }) => CoreError::NonFiniteLoss { step, detail: format!("non-finite value in {op}") },
        other => other,
    }
}

fn adam_tensors<T: Scalar>(prefix: &str, state: &AdamState<T>, out: &mut std::collections::BTreeMap<String, Tensor<f32>>) {
    for (k, v) in &state.m {
        out.insert(format!("{prefix}m/{k}"), v.cast());
    }
    for (k, v) in &state.v {
        out.insert(format!("{prefix}v/{k}"), v.cast());
    }
}

fn adam_state<T: Scalar>(ckpt: &Checkpoint, prefix: &str, step: u64) -> AdamState<T> {
    let part = |which: &str| ckpt.section(&format!("{prefix}{which}/")).into_iter().map(|(k, v)| (k, v.cast())).collect();
    AdamState { step, m: part("m"), v: part("v") }
}

#[derive(Serialize, Deserialize)]
struct TrainingState {
    config: TrainConfig,
    progress: Progress,
    adam_g_step: u64,
    adam_d_step: u64,
}

/// Alternating generator and discriminator updates with Adam.
pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    pub model: InpaintModel<T>,
    pub discriminators: Discriminators,
    pub disc_params: ParamStore<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    pub extractor: PerceptualExtractor<T>,
    pub progress: Progress,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = InpaintModel::new(config.model.clone(), config.seed)?;
        let discriminators = Self::discriminators_for(&config);
        let disc_params = discriminators.init(config.seed ^ 0xd15c)?;
        let (opt_g, opt_d) = Self::optimizers(&config);
        let extractor = PerceptualExtractor::new(config.extractor_seed)?;
        Ok(Self { config, model, discriminators, disc_params, opt_g, opt_d, extractor, progress: Progress::default() })
    }

    fn discriminators_for(config: &TrainConfig) -> Discriminators {
        Discriminators::new(config.model.pyramid.active_stages(), config.model.pyramid.num_classes, config.disc_width)
    }

    fn optimizers(c: &TrainConfig) -> (Adam<T>, Adam<T>) {
        (Adam::new(c.lr, c.beta1, c.beta2, c.weight_decay), Adam::new(c.lr, c.beta1, c.beta2, c.weight_decay))
    }

    /// Everything needed to continue training bit-identically.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = self.model.to_checkpoint()?;
        for (k, v) in self.disc_params.iter() {
            ckpt.tensors.insert(format!("{DISC_SECTION}{k}"), v.cast());
        }
        adam_tensors(ADAM_G_SECTION, &self.opt_g.state, &mut ckpt.tensors);
        adam_tensors(ADAM_D_SECTION, &self.opt_d.state, &mut ckpt.tensors);
        let state = TrainingState {
            config: self.config.clone(),
            progress: self.progress,
            adam_g_step: self.opt_g.state.step,
            adam_d_step: self.opt_d.state.step,
        };
        ckpt.config["training"] = serde_json::to_value(state)?;
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let state: TrainingState = serde_json::from_value(
            ckpt.config.get("training").cloned().ok_or_else(|| CoreError::Format("checkpoint has no training state".into()))?,
        )?;
        let model = InpaintModel::from_checkpoint(ckpt)?;
        if model.config != state.config.model {
            return Err(CoreError::Format("model and training configs disagree".into()));
        }
        let discriminators = Self::discriminators_for(&state.config);
        let expected = discriminators.init::<T>(0)?;
        let mut disc_params = ParamStore::new();
        for (k, v) in ckpt.section(DISC_SECTION) {
            if expected.get(&k).map(|e| e.shape() != v.shape()).unwrap_or(true) {
                return Err(CoreError::Format(format!("unexpected discriminator tensor {k}")));
            }
            disc_params.insert(k, v.cast())?;
        }
        if disc_params.len() != expected.len() {
            return Err(CoreError::Format("discriminator tensors missing".into()));
        }
        let (mut opt_g, mut opt_d) = Self::optimizers(&state.config);
        opt_g.state = adam_state(ckpt, ADAM_G_SECTION, state.adam_g_step);
        opt_d.state = adam_state(ckpt, ADAM_D_SECTION, state.adam_d_step);
        let extractor = PerceptualExtractor::new(state.config.extractor_seed)?;
        Ok(Self { config: state.config, model, discriminators, disc_params, opt_g, opt_d, extractor, progress: state.progress })
    }

    /// The weighted generator loss over every active scale. `pg` binds the
    /// model parameters and `pd` the discriminator parameters; gradients flow
    /// to whichever of them is trainable.
    pub fn generator_loss<'g>(&self, pg: &Binder<'g, '_, T>, pd: &Binder<'g, '_, T>, samples: &[Sample<'_, T>]) -> Result<GeneratorLoss<'g, T>> {
        let out = self.model.forward(pg, samples)?;
        let g = pg.graph();
        let image = Tensor::concat(&samples.iter().map(|s| s.image.clone()).collect::<Vec<_>>(), 0)?;
        let k = self.model.num_classes();
        let onehot = Tensor::concat(&samples.iter().map(|s| onehot_tensor::<T>(s.scene, k)).collect::<Result<Vec<_>>>()?, 0)?;
        let reals = self.model.generator.targets(&image)?;
        let w = self.config.weights;
        let (mut adv, mut perceptual, mut l1) = (0.0, 0.0, 0.0);
        let mut total: Option<Var<'g, T>> = None;
        let mut layouts = Vec::new();
        for (i, (&fake, real)) in out.stages.iter().zip(&reals).enumerate() {
            let stage = self.model.generator.stages[i].index;
            let layout = area_down(&onehot, 2 - stage)?;
            let score = self.discriminators.nets[i].forward(pd, fake, g.constant(layout.clone()))?;
            let a = hinge_g(score)?;
            let p = self.extractor.loss(fake, g.constant(real.clone()))?;
            let r = l1_loss(fake, g.constant(real.clone()))?;
            adv += a.value().item()?.f64();
            perceptual += p.value().item()?.f64();
            l1 += r.value().item()?.f64();
            let term = a.scale(w.adv)?.add(p.scale(w.perceptual)?)?.add(r.scale(w.l1)?)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
            layouts.push(layout);
        }
        let fallbacks = out.styles.iter().flat_map(|s| &s.sources).filter(|&&s| s == StyleSource::OriginalImage).count();
        Ok(GeneratorLoss { total: total.expect("at least one stage"), adv, perceptual, l1, fakes: out.stages, reals, layouts, fallbacks })
    }

    /// Discriminator hinge loss on detached fakes.
    pub fn discriminator_loss<'g>(&self, pd: &Binder<'g, '_, T>, fakes: &[Tensor<T>], reals: &[Tensor<T>], layouts: &[Tensor<T>]) -> Result<Var<'g, T>> {
        let g = pd.graph();
        let mut total: Option<Var<'g, T>> = None;
        for (i, net) in self.discriminators.nets.iter().enumerate() {
            let oh = g.constant(layouts[i].clone());
            let real = net.forward(pd, g.constant(reals[i].clone()), oh)?;
            let fake = net.forward(pd, g.constant(fakes[i].clone()), oh)?;
            let term = hinge_d(real, fake)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
        Ok(total.expect("at least one discriminator"))
    }

    /// One generator update followed by one discriminator update on the
    /// same (detached) fakes.
    pub fn train_step(&mut self, scenes: &[&LabeledScene], masks: &[(MaskKind, BinaryMask)]) -> Result<StepLog> {
        let started = Instant::now();
        let step = self.progress.step;
        if scenes.is_empty() || scenes.len() != masks.len() {
            return Err(invalid("train step", "need one mask per scene"));
        }
        let images = scenes.iter().map(|s| image_tensor::<T>(s.width, s.height, &s.image)).collect::<Result<Vec<_>>>()?;
        let layouts = scenes.iter().map(|s| RegionLayout::of_scene(s)).collect::<Result<Vec<_>>>()?;
        let samples: Vec<Sample<'_, T>> = (0..scenes.len())
            .map(|i| Sample { scene: scenes[i], image: &images[i], mask: &masks[i].1, layout: &layouts[i], fallback: Fallback::Original })
            .collect();

        let (terms, grads_g, fakes, reals, onehots, fallbacks) = {
            let g = Graph::new();
            let pg = Binder::new(&g, &self.model.params, true);
            let pd = Binder::new(&g, &self.disc_params, false);
            let loss = self.generator_loss(&pg, &pd, &samples).map_err(|e| non_finite(step, e))?;
            let w = self.config.weights;
            let total = w.adv * loss.adv + w.perceptual * loss.perceptual + w.l1 * loss.l1;
            for (name, v) in [("L_adv", loss.adv), ("L_P", loss.perceptual), ("L_1", loss.l1), ("total", total)] {
                if !v.is_finite() {
                    return Err(CoreError::NonFiniteLoss { step, detail: format!("{name} = {v}") });
                }
            }
            g.backward(loss.total).map_err(|e| non_finite(step, e.into()))?;
            let fakes: Vec<Tensor<T>> = loss.fakes.iter().map(|f| f.value()).collect();
            ((loss.adv, loss.perceptual, loss.l1, total), pg.grads(), fakes, loss.reals, loss.layouts, loss.fallbacks)
        };
        self.opt_g.step(&mut self.model.params, &grads_g)?;

        let (l_d, grads_d) = {
            let g = Graph::new();
            let pd = Binder::new(&g, &self.disc_params, true);
            let loss = self.discriminator_loss(&pd, &fakes, &reals, &onehots).map_err(|e| non_finite(step, e))?;
            let v = loss.value().item()?.f64();
            if !v.is_finite() {
                return Err(CoreError::NonFiniteLoss { step, detail: format!("L_D = {v}") });
            }
            g.backward(loss).map_err(|e| non_finite(step, e.into()))?;
            (v, pd.grads())
        };
        self.opt_d.step(&mut self.disc_params, &grads_d)?;

        self.progress.step += 1;
        Ok(StepLog {
            step: self.progress.step,
            epoch: self.progress.epoch,
            batch: self.progress.batch,
            l_adv: terms.0,
            l_p: terms.1,
            l_1: terms.2,
            total: terms.3,
            l_d,
            fallbacks,
            masks: masks.iter().map(|m| m.0).collect(),
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    fn finished(&self) -> bool {
        self.progress.epoch >= self.config.epochs || self.config.max_steps.is_some_and(|m| self.progress.step >= m)
    }

    /// Train until the configured epochs or step budget are used up, starting
    /// from the current progress. Writes the JSON-lines log, periodic
    /// checkpoints and `final.ssec` under `out_dir` when given.
    pub fn run(&mut self, scenes: &[LabeledScene], out_dir: Option<&Path>, mut on_step: impl FnMut(&StepLog)) -> Result<Vec<StepLog>> {
        if scenes.is_empty() {
            return Err(invalid("train", "empty corpus"));
        }
        let mut log = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?))
            }
            None => None,
        };
        let bs = self.config.batch_size;
        let mut logs = Vec::new();
        while !self.finished() {
            let order = epoch_order(self.config.seed, self.progress.epoch, scenes.len());
            let chunks: Vec<&[usize]> = order.chunks(bs).collect();
            while self.progress.batch < chunks.len() && !self.config.max_steps.is_some_and(|m| self.progress.step >= m) {
                let idx = chunks[self.progress.batch];
                let batch: Vec<&LabeledScene> = idx.iter().map(|&i| &scenes[i]).collect();
                let masks = batch
                    .iter()
                    .enumerate()
                    .map(|(j, s)| training_mask(mask_seed(self.config.seed, self.progress.epoch, self.progress.batch, j), s))
                    .collect::<Result<Vec<_>>>()?;
                let entry = self.train_step(&batch, &masks)?;
                self.progress.batch += 1;
                if let Some(w) = log.as_mut() {
                    serde_json::to_writer(&mut *w, &entry)?;
                    w.write_all(b"\n")?;
                }
                on_step(&entry);
                logs.push(entry);
            }
            if self.progress.batch >= chunks.len() {
                self.progress.epoch += 1;
                self.progress.batch = 0;
                let every = self.config.checkpoint_every;
                if let (Some(dir), true) = (out_dir, every > 0 && self.progress.epoch % every == 0) {
                    self.to_checkpoint()?.save(&dir.join(format!("epoch-{:04}.ssec", self.progress.epoch)))?;
                }
            }
        }
        if let Some(mut w) = log {
            w.flush()?;
        }
        if let Some(dir) = out_dir {
            self.to_checkpoint()?.save(&dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(logs)
    }
}

/// File name of the checkpoint written when a run completes.
pub const FINAL_CHECKPOINT: &str = "final.ssec";

/// The checkpoint a run in `dir` should continue from: `final.ssec` when
/// present, otherwise the latest periodic one.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let done = dir.join(FINAL_CHECKPOINT);
    if done.is_file() {
        return Ok(Some(done));
    }
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("epoch-")?.strip_suffix(".ssec")?.parse::<usize>().ok());
        if let Some(e) = epoch {
            if best.as_ref().map_or(true, |(b, _)| e > *b) {
                best = Some((e, path));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Read a JSON-lines training log.
pub fn read_log(path: &Path) -> Result<Vec<StepLog>> {
    let text = std::io::read_to_string(File::open(path)?)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
