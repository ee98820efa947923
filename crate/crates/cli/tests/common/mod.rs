#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn boxforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxforge"))
        .args(args)
        .output()
        .expect("spawn boxforge")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn write_json(path: &Path, value: &Value) -> PathBuf {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_path_buf()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two 64x48 images, categories 1 and 2, four pixel-aligned boxes.
pub fn small_dataset() -> Value {
    json!({
        "images": [
            {"id": 1, "width": 64, "height": 48, "file_name": "a.png"},
            {"id": 2, "width": 64, "height": 48, "file_name": "b.png"}
        ],
        "categories": [{"id": 1, "name": "car"}, {"id": 2, "name": "bus"}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [4, 4, 16, 12], "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 2, "bbox": [32, 16, 20, 24], "iscrowd": 0},
            {"id": 3, "image_id": 2, "category_id": 1, "bbox": [8, 8, 24, 16], "iscrowd": 0},
            {"id": 4, "image_id": 2, "category_id": 1, "bbox": [40, 20, 16, 16], "iscrowd": 0}
        ]
    })
}

/// Ground truth turned into detections with score 1.
pub fn perfect_results(dataset: &Value) -> Value {
    let dets: Vec<Value> = dataset["annotations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            json!({
                "image_id": a["image_id"],
                "category_id": a["category_id"],
                "bbox": a["bbox"],
                "score": 1.0
            })
        })
        .collect();
    Value::Array(dets)
}

pub fn write_images(dir: &Path, dataset: &Value) {
    for img in dataset["images"].as_array().unwrap() {
        let w = img["width"].as_u64().unwrap() as u32;
        let h = img["height"].as_u64().unwrap() as u32;
        let id = img["id"].as_u64().unwrap() as u32;
        let buf = image::RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([(x * 3 + id) as u8, (y * 5) as u8, ((x + y) * 7 % 251) as u8])
        });
        buf.save(dir.join(img["file_name"].as_str().unwrap())).unwrap();
    }
}
