use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ModelConfig;

/// Seed of the frozen feature extractor shared by the perceptual loss and
/// desk-FID.
pub const DEFAULT_EXTRACTOR_SEED: u64 = 0x5e1f_eed5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adv: f64,
    pub perceptual: f64,
    pub l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { adv: 1.0, perceptual: 10.0, l1: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Number of scenes drawn from the corpus.
    pub scenes: usize,
    pub epochs: usize,
    /// Stop after this many steps even if epochs remain.
    pub max_steps: Option<u64>,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub weights: LossWeights,
    /// Width factor of the discriminator channels.
    pub disc_width: f64,
    pub extractor_seed: u64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables periodic saves).
    pub checkpoint_every: usize,
}

/// Switches for the ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub use_style: bool,
    pub use_valid_ratio_gate: bool,
    pub multiscale: bool,
    pub style_dim: usize,
}

impl TrainConfig {
    /// 500 epochs, batch 3, Adam(0.5, 0.999), lr and weight decay 1e-4,
    /// loss weights (1, 10, 1), 256×256 full-width model.
    pub fn full(num_classes: usize) -> Self {
        Self {
            model: ModelConfig::full(num_classes),
            scenes: 2975,
            epochs: 500,
            max_steps: None,
            batch_size: 3,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            weight_decay: 1e-4,
            weights: LossWeights::default(),
            disc_width: 1.0,
            extractor_seed: DEFAULT_EXTRACTOR_SEED,
            seed: 0,
            checkpoint_every: 50,
        }
    }

    /// 512 scenes at 64×64 for 40 epochs with the quarter-width model.
    pub fn desk(num_classes: usize) -> Self {
        Self {
            model: ModelConfig::desk(num_classes),
            scenes: 512,
            epochs: 40,
            lr: 2e-4,
            disc_width: 0.25,
            checkpoint_every: 10,
            ..Self::full(num_classes)
        }
    }

    /// 8 scenes at 32×32, 200 steps.
    pub fn smoke(num_classes: usize) -> Self {
        Self {
            model: ModelConfig::smoke(num_classes),
            scenes: 8,
            epochs: 1000,
            max_steps: Some(200),
            checkpoint_every: 0,
            ..Self::desk(num_classes)
        }
    }

    pub fn ablation(&self) -> Ablation {
        let p = &self.model.pyramid;
        Ablation { use_style: p.use_style, use_valid_ratio_gate: self.model.use_gate, multiscale: p.multiscale, style_dim: p.style_dim }
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        let p = &mut self.model.pyramid;
        p.use_style = a.use_style;
        p.multiscale = a.multiscale;
        p.style_dim = a.style_dim;
        self.model.use_gate = a.use_valid_ratio_gate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let w = &self.weights;
        if [w.adv, w.perceptual, w.l1].iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(invalid("train config", "loss weights must be finite and nonnegative"));
        }
        if self.batch_size == 0 || self.scenes == 0 {
            return Err(invalid("train config", "batch size and scene count must be positive"));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.weight_decay >= 0.0) {
            return Err(invalid("train config", "optimizer settings out of range"));
        }
        if !(self.disc_width > 0.0 && self.disc_width <= 1.0) {
            return Err(invalid("train config", format!("discriminator width {} outside (0, 1]", self.disc_width)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_preset_values() {
        let c = TrainConfig::full(7);
        assert_eq!((c.epochs, c.batch_size), (500, 3));
        assert_eq!((c.beta1, c.beta2, c.lr, c.weight_decay), (0.5, 0.999, 1e-4, 1e-4));
        assert_eq!(c.weights, LossWeights { adv: 1.0, perceptual: 10.0, l1: 1.0 });
        c.validate().unwrap();
    }

    #[test]
    fn ablation_round_trip() {
        let c = TrainConfig::smoke(7);
        let a = Ablation { use_valid_ratio_gate: false, style_dim: 64, ..c.ablation() };
        let d = c.with_ablation(a);
        assert_eq!(d.ablation(), a);
        assert!(!d.model.use_gate);
        d.validate().unwrap();
    }
}
