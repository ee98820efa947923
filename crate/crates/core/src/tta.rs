//! Test-time augmentation merging.
//!
//! Detections produced on resized and/or mirrored copies of an image are
//! mapped back to the original frame and fused with WBF, one "model" per
//! transform. Resizing is uniform over the image, so in normalized
//! coordinates only the flip needs undoing. Letterbox padding must be
//! removed by the caller beforehand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{wbf, FusedBox, FusionConfig};
use crate::geometry::Detection;

/// One transformed copy: its pixel size and whether it was mirrored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtaTransform {
    #[serde(rename = "width")]
    pub scale_w: u32,
    #[serde(rename = "height")]
    pub scale_h: u32,
    pub flipped: bool,
}

impl TtaTransform {
    pub fn new(scale_w: u32, scale_h: u32, flipped: bool) -> Self {
        Self {
            scale_w,
            scale_h,
            flipped,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_w == 0 || self.scale_h == 0 {
            return Err(Error::Config(format!(
                "transform size must be positive, got {}x{}",
                self.scale_w, self.scale_h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaBundle {
    pub image_id: u64,
    pub entries: Vec<(TtaTransform, Vec<Detection>)>,
}

/// Maps detections from a transformed copy back to the original frame.
pub fn remap(dets: &[Detection], t: &TtaTransform) -> Vec<Detection> {
    dets.iter()
        .map(|d| Detection {
            bbox: if t.flipped { d.bbox.hflip() } else { d.bbox },
            ..*d
        })
        .collect()
}

/// Remaps every entry and fuses them, treating entry `k` as model `k`.
///
/// `cfg.num_models` is overridden with the number of entries; weights, when
/// given, must have one value per entry.
pub fn merge(bundle: &TtaBundle, cfg: &FusionConfig) -> Result<Vec<FusedBox>> {
    if bundle.entries.is_empty() {
        return Err(Error::Config(format!(
            "TTA bundle for image {} has no entries",
            bundle.image_id
        )));
    }
    let mut all = Vec::new();
    for (k, (t, dets)) in bundle.entries.iter().enumerate() {
        t.validate()?;
        all.extend(remap(dets, t).into_iter().map(|d| Detection {
            model_id: k as u32,
            ..d
        }));
    }
    let cfg = FusionConfig {
        num_models: bundle.entries.len(),
        ..cfg.clone()
    };
    wbf(&all, &cfg)
}
