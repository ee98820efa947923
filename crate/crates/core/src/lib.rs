//! Detector-agnostic object-detection toolkit.
//!
//! * [`geometry`]: normalized boxes, IoU, flips and pixel conversion.
//! * [`fusion`]: greedy NMS and weighted boxes fusion (WBF).
//! * [`augment`]: bbox jitter, grid mask, mix-up and rare-class oversampling.
//! * [`tta`]: merging of multi-scale / flipped test-time predictions.
//! * [`eval`]: COCO-protocol AP@0.50:0.95, AP@0.50 and AP@0.75.
//! * [`coco`]: COCO instances/results JSON and PNG/JPEG I/O.

pub mod augment;
pub mod coco;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod rng;
pub mod tta;

pub use coco::DatasetIndex;
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport, EvalSummary};
pub use fusion::{FusedBox, FusionConfig};
pub use geometry::{BBox, Detection, GroundTruth, ImageBuffer, ImageMeta, PixelRect};
pub use tta::{TtaBundle, TtaTransform};
