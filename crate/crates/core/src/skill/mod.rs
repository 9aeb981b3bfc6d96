//! Stage 1: unsupervised pretraining of a factorized latent action space.

mod decoder;
mod discriminator;
mod latent;
mod probe;
mod reward;
mod train;

pub use decoder::{LatentDecoder, SafetyTally, DECODER_KIND};
pub use discriminator::{Classifier, DisentangleDiscriminator, FixedDiscriminator, ScoreMode};
pub use latent::{sample_skill, LatentAction};
pub use probe::{probe_decoder, ProbeConfig, ProbeResult};
pub use reward::{latent_reward, region_shaping, safety_reward, skill_reward, SafetyWeights};
pub use train::{train_decoder, RewardModel, SkillTransition, Stage1Config, Stage1Outcome, Stage1Record};
