//! Annotation-aware augmentation: bbox jitter, grid mask, mix-up and
//! rare-class oversampling.
//!
//! Every operation is deterministic given its inputs and seed.

mod grid_mask;
mod jitter;
mod mixup;
mod oversample;

pub use grid_mask::{apply_grid, grid_mask, GridMaskConfig, GridParams};
pub use jitter::{bbox_jitter, jitter_factors, scale_about_center, JitterConfig};
pub use mixup::{blend, mix_up, sample_lambda, MixupConfig, WeightedAnnotation};
pub use oversample::{
    crop_and_flip, oversample_rare_classes, CopyPlan, OversampleConfig, OversampleOutput,
    PixelCrop,
};
