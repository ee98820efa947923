use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImageBuffer;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMaskConfig {
    /// Smallest grid period in pixels.
    pub d_min: u32,
    pub d_max: u32,
    /// Fraction of each period that is kept.
    pub keep_ratio: f64,
    pub apply_prob: f64,
    pub seed: u64,
}

impl Default for GridMaskConfig {
    fn default() -> Self {
        Self {
            d_min: 32,
            d_max: 96,
            keep_ratio: 0.5,
            apply_prob: 0.7,
            seed: 0,
        }
    }
}

impl GridMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2 <= self.d_min && self.d_min <= self.d_max) {
            return Err(Error::Config(format!(
                "grid period bounds must satisfy 2 <= d_min <= d_max, got {}..{}",
                self.d_min, self.d_max
            )));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio < 1.0) {
            return Err(Error::Config(format!(
                "keep ratio must lie in (0, 1), got {}",
                self.keep_ratio
            )));
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

/// A concrete mask: squares of side `drop_side` repeating every `period` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridParams {
    pub period: u32,
    pub offset_x: u32,
    pub offset_y: u32,
    pub drop_side: u32,
}

impl GridParams {
    pub fn new(period: u32, offset_x: u32, offset_y: u32, keep_ratio: f64) -> Self {
        Self {
            period,
            offset_x,
            offset_y,
            drop_side: (f64::from(period) * (1.0 - keep_ratio)).round() as u32,
        }
    }

    pub fn drops(&self, x: u32, y: u32) -> bool {
        let d = u64::from(self.period);
        let l = u64::from(self.drop_side);
        (u64::from(x) + u64::from(self.offset_x)) % d < l
            && (u64::from(y) + u64::from(self.offset_y)) % d < l
    }

    /// Draws the mask parameters, or `None` when the mask is skipped.
    pub fn sample(cfg: &GridMaskConfig, rng: &mut impl Rng) -> Option<Self> {
        if !rng.random_bool(cfg.apply_prob) {
            return None;
        }
        let d = rng.random_range(cfg.d_min..=cfg.d_max);
        let ox = rng.random_range(0..d);
        let oy = rng.random_range(0..d);
        Some(Self::new(d, ox, oy, cfg.keep_ratio))
    }
}

/// Zeroes every pixel selected by `params`; other pixels are left as they are.
pub fn apply_grid(img: &ImageBuffer, params: &GridParams) -> ImageBuffer {
    let mut out = img.clone();
    if params.drop_side == 0 {
        return out;
    }
    let w = img.width() as usize;
    let rows = out.pixels_mut().chunks_exact_mut(w * 3);
    for (y, row) in rows.enumerate() {
        let y = y as u32;
        if (u64::from(y) + u64::from(params.offset_y)) % u64::from(params.period)
            >= u64::from(params.drop_side)
        {
            continue;
        }
        for (x, px) in row.chunks_exact_mut(3).enumerate() {
            if params.drops(x as u32, y) {
                px.fill(0);
            }
        }
    }
    out
}

/// Grid-mask augmentation seeded from `cfg.seed`.
pub fn grid_mask(img: &ImageBuffer, cfg: &GridMaskConfig) -> Result<ImageBuffer> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    Ok(match GridParams::sample(cfg, &mut rng) {
        Some(p) => apply_grid(img, &p),
        None => img.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> ImageBuffer {
        let px = (0..w * h * 3).map(|i| (i % 251) as u8 + 1).collect();
        ImageBuffer::new(w, h, px).unwrap()
    }

    #[test]
    fn eight_by_eight_enumeration() {
        let img = ImageBuffer::filled(8, 8, [200, 100, 50]);
        let p = GridParams::new(4, 0, 0, 0.5);
        assert_eq!(p.drop_side, 2);
        let out = apply_grid(&img, &p);
        let mut zeroed = Vec::new();
        for y in 0..8 {
            for x in 0..8 {
                if out.get(x, y) == [0, 0, 0] {
                    zeroed.push((x, y));
                } else {
                    assert_eq!(out.get(x, y), [200, 100, 50]);
                }
            }
        }
        assert_eq!(zeroed.len(), 16);
        for (ox, oy) in [(0, 0), (4, 0), (0, 4), (4, 4)] {
            for dy in 0..2 {
                for dx in 0..2 {
                    assert!(zeroed.contains(&(ox + dx, oy + dy)));
                }
            }
        }
    }

    #[test]
    fn zero_drop_side_is_identity() {
        let img = gradient(10, 7);
        assert_eq!(apply_grid(&img, &GridParams::new(96, 3, 5, 0.999)), img);
    }

    #[test]
    fn probability_zero_skips() {
        let img = gradient(64, 64);
        let cfg = GridMaskConfig { apply_prob: 0.0, ..Default::default() };
        assert_eq!(grid_mask(&img, &cfg).unwrap(), img);
    }

    #[test]
    fn seeded_mask_is_reproducible() {
        let img = gradient(128, 100);
        let cfg = GridMaskConfig { apply_prob: 1.0, seed: 3, ..Default::default() };
        let a = grid_mask(&img, &cfg).unwrap();
        assert_eq!(a, grid_mask(&img, &cfg).unwrap());
        assert_ne!(a, img);
    }

    #[test]
    fn config_checks() {
        let img = gradient(4, 4);
        for cfg in [
            GridMaskConfig { d_min: 1, ..Default::default() },
            GridMaskConfig { d_min: 50, d_max: 40, ..Default::default() },
            GridMaskConfig { keep_ratio: 1.0, ..Default::default() },
            GridMaskConfig { apply_prob: 1.5, ..Default::default() },
        ] {
            assert!(matches!(grid_mask(&img, &cfg), Err(Error::Config(_))));
        }
    }
}
