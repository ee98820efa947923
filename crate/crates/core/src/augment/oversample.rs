//! Rare-category expansion by random crop and flip.
//!
//! A category is rare when it has fewer than `min_count` instances. Every
//! image holding at least one rare box is copied `copies` times. Each copy is
//! cropped to a window that fully contains one randomly chosen rare box and
//! covers at least half of the image, then mirrored with probability 0.5.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coco::DatasetIndex;
use crate::error::{Error, Result};
use crate::geometry::{BBox, GroundTruth, ImageBuffer, ImageMeta};
use crate::rng::substream;

/// Boxes keeping less than this fraction of their area after cropping are dropped.
pub const MIN_RETAINED_AREA: f64 = 0.25;
pub const FLIP_PROB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversampleConfig {
    pub min_count: usize,
    pub copies: usize,
    pub seed: u64,
}

impl OversampleConfig {
    pub fn new(min_count: usize) -> Self {
        Self {
            min_count,
            copies: 6,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_count < 1 || self.copies < 1 {
            return Err(Error::Config(format!(
                "min_count and copies must be at least 1, got {} and {}",
                self.min_count, self.copies
            )));
        }
        Ok(())
    }
}

/// Integer crop window in source-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCrop {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// How one synthetic image is derived from its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyPlan {
    pub source_image_id: u64,
    pub image: ImageMeta,
    pub crop: PixelCrop,
    pub flipped: bool,
    /// Index into the source annotations of the rare box the crop was built around.
    pub target_annotation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OversampleOutput {
    /// Originals plus every synthetic image and its annotations.
    pub dataset: DatasetIndex,
    pub plans: Vec<CopyPlan>,
}

/// Box extent snapped outward to whole pixels: `(x0, y0, x1, y1)`.
fn pixel_extent(b: &BBox, meta: &ImageMeta) -> (u32, u32, u32, u32) {
    let (w, h) = (f64::from(meta.width), f64::from(meta.height));
    let snap_lo = |v: f64, max: f64| (v * max).floor().clamp(0.0, max) as u32;
    let snap_hi = |v: f64, max: f64| (v * max).ceil().clamp(0.0, max) as u32;
    (
        snap_lo(b.x1, w),
        snap_lo(b.y1, h),
        snap_hi(b.x2, w),
        snap_hi(b.y2, h),
    )
}

fn sample_crop(meta: &ImageMeta, target: &BBox, rng: &mut impl Rng) -> PixelCrop {
    let (w, h) = (meta.width, meta.height);
    let (bx0, by0, bx1, by1) = pixel_extent(target, meta);
    let area = u64::from(w) * u64::from(h);
    let min_w = (bx1 - bx0).max(w.div_ceil(2)).max(1);
    let cw = rng.random_range(min_w..=w);
    let half_area_h = area.div_ceil(2 * u64::from(cw)) as u32;
    let min_h = (by1 - by0).max(half_area_h).max(1);
    let ch = rng.random_range(min_h..=h);
    let x = rng.random_range(bx1.saturating_sub(cw)..=bx0.min(w - cw));
    let y = rng.random_range(by1.saturating_sub(ch)..=by0.min(h - ch));
    PixelCrop { x, y, w: cw, h: ch }
}

/// Re-expresses `gt` in the crop's normalized frame, or `None` when too little survives.
fn reproject(gt: &GroundTruth, meta: &ImageMeta, crop: &PixelCrop, flipped: bool) -> Result<Option<BBox>> {
    let (w, h) = (f64::from(meta.width), f64::from(meta.height));
    let px = [gt.bbox.x1 * w, gt.bbox.y1 * h, gt.bbox.x2 * w, gt.bbox.y2 * h];
    let original = (px[2] - px[0]) * (px[3] - px[1]);
    if original <= 0.0 {
        return Ok(None);
    }
    let (cx0, cy0) = (f64::from(crop.x), f64::from(crop.y));
    let (cx1, cy1) = (cx0 + f64::from(crop.w), cy0 + f64::from(crop.h));
    let clipped = [px[0].max(cx0), px[1].max(cy0), px[2].min(cx1), px[3].min(cy1)];
    let kept = (clipped[2] - clipped[0]).max(0.0) * (clipped[3] - clipped[1]).max(0.0);
    if kept / original < MIN_RETAINED_AREA {
        return Ok(None);
    }
    let (fw, fh) = (f64::from(crop.w), f64::from(crop.h));
    let b = BBox::new(
        (clipped[0] - cx0) / fw,
        (clipped[1] - cy0) / fh,
        (clipped[2] - cx0) / fw,
        (clipped[3] - cy0) / fh,
    );
    let b = if flipped { b.hflip() } else { b };
    b.clamp_to_unit().map(Some)
}

fn copy_file_name(source: &str, new_id: u64) -> String {
    let p = Path::new(source);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let ext = p.extension().and_then(|s| s.to_str()).unwrap_or("png");
    let name = format!("{stem}_os{new_id}.{ext}");
    match p.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => dir.join(name).to_string_lossy().into_owned(),
        None => name,
    }
}

pub fn oversample_rare_classes(index: &DatasetIndex, cfg: &OversampleConfig) -> Result<OversampleOutput> {
    cfg.validate()?;
    index.validate()?;
    let rare: BTreeSet<u64> = index
        .instance_counts
        .iter()
        .filter(|(_, &n)| n < cfg.min_count)
        .map(|(&c, _)| c)
        .collect();

    // pre-scan: eligible images and their candidate boxes, in image id order
    let eligible: Vec<(u64, Vec<usize>)> = index
        .images
        .values()
        .filter_map(|meta| {
            let targets: Vec<usize> = index
                .annotations_of(meta.image_id)
                .filter(|&i| {
                    let a = &index.annotations[i];
                    let (x0, y0, x1, y1) = pixel_extent(&a.bbox, meta);
                    rare.contains(&a.category_id) && x1 > x0 && y1 > y0
                })
                .collect();
            (!targets.is_empty()).then_some((meta.image_id, targets))
        })
        .collect();

    let mut dataset = index.clone();
    let mut plans = Vec::with_capacity(eligible.len() * cfg.copies);
    let first_id = index.images.keys().next_back().map_or(1, |m| m + 1);

    for (k, (image_id, targets)) in eligible.iter().enumerate() {
        let meta = &index.images[image_id];
        let members: Vec<usize> = index.annotations_of(*image_id).collect();
        let mut rng = substream(cfg.seed, "oversample", *image_id);
        for j in 0..cfg.copies {
            let new_id = first_id + (k * cfg.copies + j) as u64;
            let target = targets[rng.random_range(0..targets.len())];
            let crop = sample_crop(meta, &index.annotations[target].bbox, &mut rng);
            let flipped = rng.random_bool(FLIP_PROB);
            let new_meta = ImageMeta::new(new_id, crop.w, crop.h, copy_file_name(&meta.file_name, new_id));
            for &i in &members {
                let gt = &index.annotations[i];
                if let Some(bbox) = reproject(gt, meta, &crop, flipped)? {
                    dataset.push_annotation(
                        GroundTruth {
                            bbox,
                            image_id: new_id,
                            ..*gt
                        },
                        index.weights.get(i).copied().unwrap_or(1.0),
                    );
                }
            }
            dataset.add_image(new_meta.clone(), Some(*image_id));
            plans.push(CopyPlan {
                source_image_id: *image_id,
                image: new_meta,
                crop,
                flipped,
                target_annotation: target,
            });
        }
    }
    dataset.recount();
    Ok(OversampleOutput { dataset, plans })
}

/// Renders the pixels of one planned copy from its source image.
pub fn crop_and_flip(img: &ImageBuffer, plan: &CopyPlan) -> Result<ImageBuffer> {
    let c = plan.crop;
    if c.x + c.w > img.width() || c.y + c.h > img.height() {
        return Err(Error::Shape(format!(
            "crop {}x{}+{}+{} exceeds {}x{} source image {}",
            c.w,
            c.h,
            c.x,
            c.y,
            img.width(),
            img.height(),
            plan.source_image_id
        )));
    }
    let src_w = img.width() as usize;
    let mut pixels = Vec::with_capacity(c.w as usize * c.h as usize * 3);
    for y in c.y..c.y + c.h {
        let row = &img.pixels()[(y as usize * src_w + c.x as usize) * 3..][..c.w as usize * 3];
        if plan.flipped {
            for px in row.chunks_exact(3).rev() {
                pixels.extend_from_slice(px);
            }
        } else {
            pixels.extend_from_slice(row);
        }
    }
    ImageBuffer::new(c.w, c.h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn dataset(counts: &[(u64, usize)]) -> DatasetIndex {
        let images = (1..=4).map(|i| ImageMeta::new(i, 200, 100, format!("img/{i}.jpg")));
        let mut anns = Vec::new();
        for &(cat, n) in counts {
            for k in 0..n {
                let i = (k % 4) as u64 + 1;
                let x = 0.05 + 0.1 * (k % 7) as f64;
                anns.push(GroundTruth {
                    bbox: BBox::new(x, 0.2, x + 0.15, 0.6),
                    category_id: cat,
                    image_id: i,
                    ignore: false,
                });
            }
        }
        let cats: BTreeMap<u64, String> = counts.iter().map(|&(c, _)| (c, format!("c{c}"))).collect();
        DatasetIndex::new(images, anns, cats).unwrap()
    }

    #[test]
    fn nothing_rare_means_unchanged() {
        let ds = dataset(&[(1, 10), (2, 12)]);
        let out = oversample_rare_classes(&ds, &OversampleConfig::new(5)).unwrap();
        assert_eq!(out.dataset, ds);
        assert!(out.plans.is_empty());
    }

    #[test]
    fn config_errors() {
        let ds = dataset(&[(1, 1)]);
        let mut cfg = OversampleConfig::new(0);
        assert!(oversample_rare_classes(&ds, &cfg).is_err());
        cfg = OversampleConfig { copies: 0, ..OversampleConfig::new(3) };
        assert!(matches!(oversample_rare_classes(&ds, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn file_names_keep_directory_and_extension() {
        assert_eq!(copy_file_name("img/3.jpg", 17), "img/3_os17.jpg");
        assert_eq!(copy_file_name("x", 2), "x_os2.png");
    }

    #[test]
    fn crops_honor_area_and_containment() {
        let ds = dataset(&[(1, 40), (2, 3)]);
        let cfg = OversampleConfig { seed: 9, ..OversampleConfig::new(5) };
        let out = oversample_rare_classes(&ds, &cfg).unwrap();
        assert_eq!(out.plans.len(), 3 * 6);
        for plan in &out.plans {
            let src = &ds.images[&plan.source_image_id];
            assert!(2 * u64::from(plan.crop.w) * u64::from(plan.crop.h) >= u64::from(src.width) * u64::from(src.height));
            let t = ds.annotations[plan.target_annotation].bbox;
            let (x0, y0, x1, y1) = pixel_extent(&t, src);
            assert!(plan.crop.x <= x0 && x1 <= plan.crop.x + plan.crop.w);
            assert!(plan.crop.y <= y0 && y1 <= plan.crop.y + plan.crop.h);
        }
        let again = oversample_rare_classes(&ds, &cfg).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn crop_and_flip_pixels() {
        let img = ImageBuffer::new(3, 2, (0..18).collect()).unwrap();
        let plan = CopyPlan {
            source_image_id: 1,
            image: ImageMeta::new(9, 2, 1, "x.png"),
            crop: PixelCrop { x: 1, y: 1, w: 2, h: 1 },
            flipped: true,
            target_annotation: 0,
        };
        let out = crop_and_flip(&img, &plan).unwrap();
        assert_eq!(out.pixels(), &[15, 16, 17, 12, 13, 14]);
        let bad = CopyPlan { crop: PixelCrop { x: 2, y: 0, w: 2, h: 1 }, ..plan };
        assert!(crop_and_flip(&img, &bad).is_err());
    }
}
