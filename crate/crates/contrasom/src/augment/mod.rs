//! Modality-specific augmentation: stochastic pixel-space transforms for
//! images, feature-space diffusion for LiDAR features.

mod diffusion;
mod image;

pub use diffusion::{
    diffusion_loss, diffusion_loss_eval, diffusion_loss_tape, draw_loss_batch, draw_view,
    forward_noise, gaussian_vec, make_schedule, reverse_skip_sample, two_view_augment,
    view_from_draw, DiffusionConfig, DiffusionDraw, DiffusionSchedule, EpsilonMlp,
    EpsilonMlpConfig, LearnedNoise, LossReduction, NoisePredictor, OracleNoise, SkipSampleResult,
    ViewDraw,
};
pub use image::{augment_image, augment_stochastic, normalize, ImageAugConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid diffusion schedule: {0}")]
    InvalidSchedule(String),
    #[error("diffusion step {step} outside 1..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty feature batch")]
    EmptyBatch,
}
