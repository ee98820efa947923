//! Synthetic fixtures for the benchmarks.

use std::collections::BTreeMap;

use boxforge_core::{BBox, DatasetIndex, Detection, GroundTruth, ImageMeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box(rng: &mut impl Rng) -> BBox {
    let x = rng.random_range(0.0..0.8);
    let y = rng.random_range(0.0..0.8);
    let w = rng.random_range(0.02..0.2);
    let h = rng.random_range(0.02..0.2);
    BBox::new(x, y, x + w, y + h)
}

/// `images * per_image` detections spread over `models` models and 5 categories.
pub fn ensemble_detections(seed: u64, images: u64, per_image: usize, models: u32) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(images as usize * per_image);
    for image_id in 1..=images {
        // anchors so that models agree on roughly the same objects
        let anchors: Vec<BBox> = (0..per_image / models as usize + 1).map(|_| random_box(&mut rng)).collect();
        for k in 0..per_image {
            let a = anchors[k % anchors.len()];
            let j = |rng: &mut ChaCha8Rng| rng.random_range(-0.01..0.01);
            let bbox = BBox::new(a.x1 + j(&mut rng), a.y1 + j(&mut rng), a.x2 + j(&mut rng), a.y2 + j(&mut rng))
                .clamp_to_unit()
                .expect("finite");
            out.push(Detection {
                bbox,
                score: rng.random_range(0.05..1.0),
                category_id: (k % 5) as u64 + 1,
                model_id: (k as u32) % models,
                image_id,
            });
        }
    }
    out
}

/// Ground truth plus noisy detections for evaluation benchmarks.
pub fn eval_fixture(seed: u64, images: u64, per_image: usize) -> (DatasetIndex, Vec<Detection>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metas = (1..=images).map(|i| ImageMeta::new(i, 640, 480, format!("{i}.jpg")));
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for image_id in 1..=images {
        for k in 0..per_image {
            let bbox = random_box(&mut rng);
            let category_id = (k % 5) as u64 + 1;
            gts.push(GroundTruth { bbox, category_id, image_id, ignore: false });
            let shift = rng.random_range(-0.02..0.02);
            dets.push(Detection {
                bbox: BBox::new(bbox.x1 + shift, bbox.y1, bbox.x2 + shift, bbox.y2)
                    .clamp_to_unit()
                    .expect("finite"),
                score: rng.random_range(0.0..1.0),
                category_id,
                model_id: 0,
                image_id,
            });
        }
    }
    let cats: BTreeMap<u64, String> = (1..=5).map(|c| (c, format!("c{c}"))).collect();
    let index = DatasetIndex::new(metas, gts, cats).expect("consistent fixture");
    (index, dets)
}
