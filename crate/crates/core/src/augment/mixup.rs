use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GroundTruth, ImageBuffer};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    /// Shape of the symmetric Beta(alpha, alpha) law for the mixing weight.
    pub alpha: f64,
    pub apply_prob: f64,
    pub seed: u64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            apply_prob: 0.5,
            seed: 0,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("mix-up alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.apply_prob) {
            return Err(Error::Config(format!(
                "apply probability must lie in [0, 1], got {}",
                self.apply_prob
            )));
        }
        Ok(())
    }
}

/// A ground-truth box carrying a soft label weight in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedAnnotation {
    pub gt: GroundTruth,
    pub weight: f64,
}

/// Draws the weight of the first image. Returns 1 when mixing is skipped.
pub fn sample_lambda(cfg: &MixupConfig, rng: &mut impl Rng) -> Result<f64> {
    cfg.validate()?;
    if !rng.random_bool(cfg.apply_prob) {
        return Ok(1.0);
    }
    let beta = Beta::new(cfg.alpha, cfg.alpha).map_err(|e| Error::Config(e.to_string()))?;
    Ok(beta.sample(rng))
}

/// Blends `a` and `b` with weight `lambda` on `a`.
///
/// Boxes from `b` are re-homed onto `a`'s image id. Annotations whose weight
/// would be zero are dropped.
pub fn blend(
    a: &ImageBuffer,
    a_gts: &[GroundTruth],
    b: &ImageBuffer,
    b_gts: &[GroundTruth],
    lambda: f64,
) -> Result<(ImageBuffer, Vec<WeightedAnnotation>)> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Shape(format!(
            "cannot mix {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("mixing weight must lie in [0, 1], got {lambda}")));
    }
    let pixels = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&pa, &pb)| {
            (lambda * f64::from(pa) + (1.0 - lambda) * f64::from(pb))
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    let image = ImageBuffer::new(a.width(), a.height(), pixels)?;

    let target = a_gts.first().or(b_gts.first()).map(|g| g.image_id);
    let mut anns = Vec::with_capacity(a_gts.len() + b_gts.len());
    if lambda > 0.0 {
        anns.extend(a_gts.iter().map(|&gt| WeightedAnnotation { gt, weight: lambda }));
    }
    if lambda < 1.0 {
        anns.extend(b_gts.iter().map(|&gt| WeightedAnnotation {
            gt: GroundTruth {
                image_id: target.unwrap_or(gt.image_id),
                ..gt
            },
            weight: 1.0 - lambda,
        }));
    }
    Ok((image, anns))
}

/// Mix-up with the weight drawn from `cfg`.
pub fn mix_up(
    a: &ImageBuffer,
    a_gts: &[GroundTruth],
    b: &ImageBuffer,
    b_gts: &[GroundTruth],
    cfg: &MixupConfig,
) -> Result<(ImageBuffer, Vec<WeightedAnnotation>, f64)> {
    let mut rng = rng_from_seed(cfg.seed);
    let lambda = sample_lambda(cfg, &mut rng)?;
    let (img, anns) = blend(a, a_gts, b, b_gts, lambda)?;
    Ok((img, anns, lambda))
}
