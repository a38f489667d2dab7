//! Adversarial training: one patch discriminator per scale, hinge loss, a
//! frozen random-feature perceptual loss, L1, and Adam on both sides.

mod config;
mod discriminator;
mod losses;
mod trainer;

pub use config::{Ablation, LossWeights, TrainConfig, DEFAULT_EXTRACTOR_SEED};
pub use discriminator::{area_down, DiscriminatorNet, Discriminators, DISC_KERNEL, DISC_LAYERS, DISC_MAX_CHANNELS, DISC_OUT_CHANNELS};
pub use losses::{hinge_d, hinge_g, l1_loss, PerceptualExtractor, EXTRACTOR_CHANNELS};
pub use trainer::{epoch_order, latest_checkpoint, mask_seed, read_log, FINAL_CHECKPOINT, GeneratorLoss, Progress, StepLog, Trainer, ADAM_D_SECTION, ADAM_G_SECTION, DISC_SECTION, LOG_FILE};
