#![allow(dead_code)]

use std::collections::BTreeMap;

use boxforge_core::{BBox, DatasetIndex, Detection, GroundTruth, ImageMeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box(rng: &mut impl Rng) -> BBox {
    let x = rng.random_range(0.0..0.85);
    let y = rng.random_range(0.0..0.85);
    let w = rng.random_range(0.01..0.15);
    let h = rng.random_range(0.01..0.15);
    BBox::new(x, y, x + w, y + h)
}

pub fn perturb(b: &BBox, amount: f64, rng: &mut impl Rng) -> BBox {
    let mut j = || rng.random_range(-amount..=amount);
    BBox::new(b.x1 + j(), b.y1 + j(), b.x2 + j(), b.y2 + j())
        .clamp_to_unit()
        .unwrap()
}

/// Up to `max_boxes` detections on one image, clustered around a few anchors
/// so that suppression and fusion have real work to do.
pub fn random_image_dets(rng: &mut impl Rng, max_boxes: usize, categories: u64, models: u32) -> Vec<Detection> {
    let n = rng.random_range(0..=max_boxes);
    let anchors: Vec<BBox> = (0..rng.random_range(1..=8)).map(|_| random_box(rng)).collect();
    (0..n)
        .map(|_| {
            let a = anchors[rng.random_range(0..anchors.len())];
            Detection {
                bbox: perturb(&a, 0.03, rng),
                // coarse scores so that ties actually occur
                score: f64::from(rng.random_range(1..=40u32)) / 40.0,
                category_id: rng.random_range(1..=categories),
                model_id: rng.random_range(0..models),
                image_id: 1,
            }
        })
        .collect()
}

pub struct EvalFixture {
    pub index: DatasetIndex,
    pub dets: Vec<Detection>,
}

/// Randomized evaluation fixture: up to 20 images with up to 50 GT boxes each,
/// some crowd regions, noisy true positives, duplicates and false positives.
pub fn random_eval_fixture(seed: u64) -> EvalFixture {
    let mut rng = rng(seed);
    let n_images = rng.random_range(1..=20u64);
    let n_categories = rng.random_range(1..=4u64);
    let metas: Vec<ImageMeta> = (1..=n_images)
        .map(|i| ImageMeta::new(i, rng.random_range(50..800), rng.random_range(50..800), format!("{i}.jpg")))
        .collect();
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for m in &metas {
        let n = rng.random_range(0..=50);
        for _ in 0..n {
            let bbox = random_box(&mut rng);
            let category_id = rng.random_range(1..=n_categories);
            let ignore = rng.random_bool(0.08);
            gts.push(GroundTruth { bbox, category_id, image_id: m.image_id, ignore });
            let copies = if rng.random_bool(0.75) { 1 + usize::from(rng.random_bool(0.2)) } else { 0 };
            for _ in 0..copies {
                dets.push(Detection {
                    bbox: perturb(&bbox, 0.02, &mut rng),
                    score: rng.random_range(0.0..1.0),
                    category_id,
                    model_id: 0,
                    image_id: m.image_id,
                });
            }
        }
        for _ in 0..rng.random_range(0..10) {
            dets.push(Detection {
                bbox: random_box(&mut rng),
                score: rng.random_range(0.0..1.0),
                category_id: rng.random_range(1..=n_categories + 1),
                model_id: 0,
                image_id: m.image_id,
            });
        }
    }
    let cats: BTreeMap<u64, String> = (1..=n_categories).map(|c| (c, format!("c{c}"))).collect();
    EvalFixture {
        index: DatasetIndex::new(metas, gts, cats).unwrap(),
        dets,
    }
}
