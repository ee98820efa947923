mod common;

use std::fs;

use boxforge_core::coco::{load_annotations, load_results, save_annotations, save_results};
use boxforge_core::{DatasetIndex, Detection, GroundTruth, ImageMeta};
use common::{random_box, rng};
use rand::Rng;

fn index(n_images: u64) -> DatasetIndex {
    let mut r = rng(1);
    let metas: Vec<ImageMeta> = (1..=n_images)
        .map(|i| ImageMeta::new(i, r.random_range(1..4000), r.random_range(1..4000), format!("{i}.jpg")))
        .collect();
    DatasetIndex::new(metas, vec![], [(1, "a".into()), (2, "b".into())].into()).unwrap()
}

#[test]
fn results_round_trip_within_a_micro_pixel() {
    let idx = index(30);
    let mut r = rng(2);
    let dets: Vec<Detection> = (0..1000)
        .map(|_| Detection {
            bbox: random_box(&mut r),
            score: r.random_range(0.0..=1.0),
            category_id: r.random_range(1..=2),
            model_id: 0,
            image_id: r.random_range(1..=30),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.json");
    save_results(&dets, &idx, &p).unwrap();
    let first: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    let back = load_results(&p, &idx, 0).unwrap();
    let p2 = dir.path().join("r2.json");
    save_results(&back, &idx, &p2).unwrap();
    let second: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p2).unwrap()).unwrap();
    for (a, b) in first.as_array().unwrap().iter().zip(second.as_array().unwrap()) {
        assert_eq!(a["image_id"], b["image_id"]);
        assert_eq!(a["category_id"], b["category_id"]);
        assert_eq!(a["score"], b["score"]);
        for k in 0..4 {
            let (x, y) = (a["bbox"][k].as_f64().unwrap(), b["bbox"][k].as_f64().unwrap());
            assert!((x - y).abs() < 1e-6);
        }
    }
    for (d, e) in dets.iter().zip(&back) {
        assert_eq!((d.image_id, d.category_id, d.score), (e.image_id, e.category_id, e.score));
    }
}

#[test]
fn model_ids_tag_each_source_file() {
    let idx = index(2);
    let dir = tempfile::tempdir().unwrap();
    let mut merged = Vec::new();
    for m in 0..3u32 {
        let p = dir.path().join(format!("m{m}.json"));
        fs::write(&p, format!(r#"[{{"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 0.{m}5}}]"#)).unwrap();
        merged.extend(load_results(&p, &idx, m).unwrap());
    }
    assert_eq!(merged.iter().map(|d| d.model_id).collect::<Vec<_>>(), [0, 1, 2]);
}

#[test]
fn annotations_round_trip_through_disk() {
    let mut idx = index(5);
    let mut r = rng(3);
    for _ in 0..40 {
        let gt = GroundTruth {
            bbox: random_box(&mut r),
            category_id: r.random_range(1..=2),
            image_id: r.random_range(1..=5),
            ignore: r.random_bool(0.1),
        };
        idx.push_annotation(gt, if r.random_bool(0.5) { 1.0 } else { 0.5 });
    }
    idx.recount();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gt.json");
    save_annotations(&idx, &p).unwrap();
    let back = load_annotations(&p).unwrap();
    assert_eq!(back.weights, idx.weights);
    assert_eq!(back.instance_counts, idx.instance_counts);
    for (a, b) in idx.annotations.iter().zip(&back.annotations) {
        assert_eq!((a.image_id, a.category_id, a.ignore), (b.image_id, b.category_id, b.ignore));
        for (x, y) in a.bbox.coords().iter().zip(b.bbox.coords()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
