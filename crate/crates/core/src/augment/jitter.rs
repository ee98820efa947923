use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, GroundTruth, ImageMeta};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    pub amp_lo: f64,
    pub amp_hi: f64,
    pub seed: u64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            amp_lo: 0.95,
            amp_hi: 1.05,
            seed: 0,
        }
    }
}

impl JitterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amp_lo > 0.0 && self.amp_lo <= self.amp_hi && self.amp_hi.is_finite()) {
            return Err(Error::Config(format!(
                "jitter amplitude must satisfy 0 < lo <= hi, got {}:{}",
                self.amp_lo, self.amp_hi
            )));
        }
        Ok(())
    }
}

/// Scales a box about its center by `sx` horizontally and `sy` vertically.
///
/// Written as an edge offset so that a factor of exactly 1 returns the
/// coordinates bit-for-bit.
pub fn scale_about_center(b: &BBox, sx: f64, sy: f64) -> BBox {
    let dx = (sx - 1.0) * b.width() / 2.0;
    let dy = (sy - 1.0) * b.height() / 2.0;
    BBox::new(b.x1 - dx, b.y1 - dy, b.x2 + dx, b.y2 + dy)
}

/// The `(sx, sy)` factors `bbox_jitter` uses for each box of image `meta`.
pub fn jitter_factors(count: usize, meta: &ImageMeta, cfg: &JitterConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, "bbox-jitter", meta.image_id);
    let mut draw = || {
        if cfg.amp_lo == cfg.amp_hi {
            cfg.amp_lo
        } else {
            rng.random_range(cfg.amp_lo..=cfg.amp_hi)
        }
    };
    Ok((0..count).map(|_| (draw(), draw())).collect())
}

/// Randomly rescales every box of one image about its center, then clamps
/// to the unit square. Pixels are never touched.
pub fn bbox_jitter(gts: &[GroundTruth], meta: &ImageMeta, cfg: &JitterConfig) -> Result<Vec<GroundTruth>> {
    let factors = jitter_factors(gts.len(), meta, cfg)?;
    gts.iter()
        .zip(factors)
        .map(|(gt, (sx, sy))| {
            Ok(GroundTruth {
                bbox: scale_about_center(&gt.bbox, sx, sy).clamp_to_unit()?,
                ..*gt
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(c: [f64; 4], category_id: u64) -> GroundTruth {
        GroundTruth {
            bbox: BBox::from_coords(c),
            category_id,
            image_id: 3,
            ignore: false,
        }
    }

    fn meta() -> ImageMeta {
        ImageMeta::new(3, 640, 480, "3.jpg")
    }

    #[test]
    fn unit_amplitude_is_identity() {
        let gts = vec![gt([0.1, 0.2, 0.35, 0.9], 1), gt([0.0, 0.0, 1.0, 1.0], 2)];
        let cfg = JitterConfig { amp_lo: 1.0, amp_hi: 1.0, seed: 5 };
        assert_eq!(bbox_jitter(&gts, &meta(), &cfg).unwrap(), gts);
    }

    #[test]
    fn forced_factor_example() {
        let b = scale_about_center(&BBox::new(0.4, 0.4, 0.6, 0.6), 1.05, 1.05);
        for (got, want) in b.coords().iter().zip([0.395, 0.395, 0.605, 0.605]) {
            assert!((got - want).abs() < 1e-12, "{got}");
        }
    }

    #[test]
    fn seeded_and_order_preserving() {
        let gts: Vec<_> = (0..20u32)
            .map(|i| {
                let v = f64::from(i) / 25.0;
                gt([v, v, v + 0.2, v + 0.1], u64::from(i % 3) + 1)
            })
            .collect();
        let cfg = JitterConfig { seed: 11, ..Default::default() };
        let a = bbox_jitter(&gts, &meta(), &cfg).unwrap();
        let b = bbox_jitter(&gts, &meta(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), gts.len());
        for (o, j) in gts.iter().zip(&a) {
            assert_eq!(o.category_id, j.category_id);
            assert!(j.bbox.is_valid());
        }
        let other = bbox_jitter(&gts, &meta(), &JitterConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn factors_stay_in_range() {
        let f = jitter_factors(500, &meta(), &JitterConfig::default()).unwrap();
        assert!(f
            .iter()
            .all(|&(sx, sy)| (0.95..=1.05).contains(&sx) && (0.95..=1.05).contains(&sy)));
    }

    #[test]
    fn bad_amplitude_rejected() {
        let cfg = JitterConfig { amp_lo: 1.1, amp_hi: 1.0, seed: 0 };
        assert!(bbox_jitter(&[], &meta(), &cfg).is_err());
        let cfg = JitterConfig { amp_lo: 0.0, amp_hi: 1.0, seed: 0 };
        assert!(cfg.validate().is_err());
    }
}
