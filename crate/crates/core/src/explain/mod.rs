//! Mask optimizers for shearlet, wavelet and pixel explanations.

mod config;
mod noise;
mod objective;
mod optimize;
mod smooth;

pub use config::{ExplainerConfig, Method, PenaltyNorm};
pub use noise::{adapted_noise, GroupStats, NoiseModel, PerturbationBatch};
pub use objective::{objective_and_grad, MaskProblem, ObjectiveParts};
pub use optimize::{
    default_shearlet_scales, default_wavelet_levels, explain, optimize_mask, pixel_mask_explain, Adam,
    ExplanationResult, Representation,
};
pub use smooth::{smooth_mask_from_latent, smooth_pixel_mask_explain, upsampling_operator};
