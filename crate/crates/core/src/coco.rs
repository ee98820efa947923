//! COCO instances / results JSON and image files.
//!
//! Field names follow the COCO conventions exactly:
//! `images[].{id,width,height,file_name}`,
//! `annotations[].{id,image_id,category_id,bbox,iscrowd,area}` and
//! `results[].{image_id,category_id,bbox,score}`. Unknown top-level, image,
//! category and annotation fields are carried through on re-serialization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection, GroundTruth, ImageBuffer, ImageMeta, PixelRect};

pub const JPEG_QUALITY: u8 = 95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    #[serde(default)]
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    #[serde(default, deserialize_with = "de_flag")]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    /// Mix-up label weight; absent means 1.0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// A whole COCO instances file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    #[serde(default)]
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    pub score: f64,
}

// iscrowd shows up as 0/1 or true/false in the wild
fn de_flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u8, D::Error> {
    match Value::deserialize(d)? {
        Value::Bool(b) => Ok(u8::from(b)),
        Value::Number(n) => Ok(u8::from(n.as_f64().unwrap_or(0.0) != 0.0)),
        Value::Null => Ok(0),
        other => Err(serde::de::Error::custom(format!(
            "iscrowd must be a number or boolean, got {other}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Annotation boxes that extended past the image and were clipped.
    pub clamped_boxes: usize,
}

/// In-memory dataset: images, normalized ground truth and category table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetIndex {
    pub images: BTreeMap<u64, ImageMeta>,
    pub annotations: Vec<GroundTruth>,
    /// Per-annotation label weight, parallel to `annotations`.
    pub weights: Vec<f64>,
    pub categories: BTreeMap<u64, String>,
    pub instance_counts: BTreeMap<u64, usize>,
    pub report: LoadReport,
    extra: Map<String, Value>,
    image_extra: BTreeMap<u64, Map<String, Value>>,
    category_extra: BTreeMap<u64, Map<String, Value>>,
}

impl DatasetIndex {
    /// Builds an index from parts, checking referential integrity.
    pub fn new(
        images: impl IntoIterator<Item = ImageMeta>,
        annotations: Vec<GroundTruth>,
        categories: BTreeMap<u64, String>,
    ) -> Result<Self> {
        let weights = vec![1.0; annotations.len()];
        let mut index = Self {
            images: images.into_iter().map(|m| (m.image_id, m)).collect(),
            annotations,
            weights,
            categories,
            ..Default::default()
        };
        index.validate()?;
        index.recount();
        Ok(index)
    }

    pub fn from_dataset(ds: CocoDataset) -> Result<Self> {
        let mut index = DatasetIndex {
            extra: ds.extra,
            ..Default::default()
        };
        for img in ds.images {
            if img.width == 0 || img.height == 0 {
                return Err(Error::InvalidMeta(format!(
                    "image {} has zero dimension {}x{}",
                    img.id, img.width, img.height
                )));
            }
            index.image_extra.insert(img.id, img.extra);
            index.images.insert(
                img.id,
                ImageMeta::new(img.id, img.width, img.height, img.file_name),
            );
        }
        for cat in ds.categories {
            index.category_extra.insert(cat.id, cat.extra);
            index.categories.insert(cat.id, cat.name);
        }

        let mut bad_images = Vec::new();
        let mut bad_categories = Vec::new();
        for ann in &ds.annotations {
            if !index.images.contains_key(&ann.image_id) {
                bad_images.push(ann.image_id);
            }
            if !index.categories.contains_key(&ann.category_id) {
                bad_categories.push(ann.category_id);
            }
        }
        if !bad_images.is_empty() || !bad_categories.is_empty() {
            return Err(Error::referential(bad_images, bad_categories));
        }

        for ann in ds.annotations {
            let meta = &index.images[&ann.image_id];
            let [x, y, w, h] = ann.bbox;
            let raw = BBox::from_pixels(&PixelRect { x, y, w, h }, meta)?;
            let bbox = raw.clamp_to_unit()?;
            if bbox != raw {
                index.report.clamped_boxes += 1;
            }
            if let Some(wt) = ann.weight {
                if !(wt > 0.0 && wt <= 1.0) {
                    return Err(Error::Validation(format!(
                        "annotation {} has weight {wt} outside (0, 1]",
                        ann.id
                    )));
                }
            }
            index.annotations.push(GroundTruth {
                bbox,
                category_id: ann.category_id,
                image_id: ann.image_id,
                ignore: ann.iscrowd != 0,
            });
            index.weights.push(ann.weight.unwrap_or(1.0));
        }
        if index.report.clamped_boxes > 0 {
            log::warn!(
                "{} annotation boxes extended past their image and were clamped",
                index.report.clamped_boxes
            );
        }
        index.recount();
        Ok(index)
    }

    /// Serializes back to COCO layout. Annotation ids are reassigned 1..=n.
    pub fn to_dataset(&self) -> Result<CocoDataset> {
        self.validate()?;
        let images = self
            .images
            .values()
            .map(|m| CocoImage {
                id: m.image_id,
                width: m.width,
                height: m.height,
                file_name: m.file_name.clone(),
                extra: self.image_extra.get(&m.image_id).cloned().unwrap_or_default(),
            })
            .collect();
        let categories = self
            .categories
            .iter()
            .map(|(&id, name)| CocoCategory {
                id,
                name: name.clone(),
                extra: self.category_extra.get(&id).cloned().unwrap_or_default(),
            })
            .collect();
        let mut annotations = Vec::with_capacity(self.annotations.len());
        for (i, gt) in self.annotations.iter().enumerate() {
            let r = gt.bbox.to_pixels(&self.images[&gt.image_id])?;
            let weight = self.weights.get(i).copied().unwrap_or(1.0);
            annotations.push(CocoAnnotation {
                id: i as u64 + 1,
                image_id: gt.image_id,
                category_id: gt.category_id,
                bbox: [r.x, r.y, r.w, r.h],
                iscrowd: u8::from(gt.ignore),
                area: Some(r.w * r.h),
                weight: (weight != 1.0).then_some(weight),
                extra: Map::new(),
            });
        }
        Ok(CocoDataset {
            images,
            annotations,
            categories,
            extra: self.extra.clone(),
        })
    }

    pub fn recount(&mut self) {
        self.instance_counts = self.categories.keys().map(|&c| (c, 0)).collect();
        for gt in &self.annotations {
            *self.instance_counts.entry(gt.category_id).or_insert(0) += 1;
        }
        self.weights.resize(self.annotations.len(), 1.0);
    }

    pub fn validate(&self) -> Result<()> {
        let bad_images: Vec<u64> = self
            .annotations
            .iter()
            .map(|a| a.image_id)
            .filter(|id| !self.images.contains_key(id))
            .collect();
        let bad_categories: Vec<u64> = self
            .annotations
            .iter()
            .map(|a| a.category_id)
            .filter(|id| !self.categories.contains_key(id))
            .collect();
        if bad_images.is_empty() && bad_categories.is_empty() {
            Ok(())
        } else {
            Err(Error::referential(bad_images, bad_categories))
        }
    }

    /// Indices of the annotations belonging to `image_id`.
    pub fn annotations_of(&self, image_id: u64) -> impl Iterator<Item = usize> + '_ {
        self.annotations
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.image_id == image_id)
            .map(|(i, _)| i)
    }

    /// Registers a new image, copying pass-through fields from `template`.
    pub fn add_image(&mut self, meta: ImageMeta, template: Option<u64>) {
        if let Some(extra) = template.and_then(|t| self.image_extra.get(&t)).cloned() {
            self.image_extra.insert(meta.image_id, extra);
        }
        self.images.insert(meta.image_id, meta);
    }

    pub fn push_annotation(&mut self, gt: GroundTruth, weight: f64) {
        self.annotations.push(gt);
        self.weights.push(weight);
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        message: e.to_string(),
        offset: byte_offset(&text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (before + column.saturating_sub(1)).min(text.len())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer(&mut w, value).map_err(|e| io_err(e.into()))?;
    w.flush().map_err(io_err)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<DatasetIndex> {
    DatasetIndex::from_dataset(read_json(path.as_ref())?)
}

pub fn save_annotations(index: &DatasetIndex, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), &index.to_dataset()?)
}

/// Loads a results array, normalizing each box by the dimensions returned
/// from `dims` for its image id.
pub fn load_results_with(
    path: impl AsRef<Path>,
    model_id: u32,
    dims: impl Fn(u64) -> Option<ImageMeta>,
) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let raw: Vec<CocoResult> = read_json(path)?;
    let unknown: Vec<u64> = raw
        .iter()
        .map(|r| r.image_id)
        .filter(|&id| dims(id).is_none())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::referential(unknown, Vec::new()));
    }
    raw.into_iter()
        .map(|r| {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::Validation(format!(
                    "{}: score {} for image {} lies outside [0, 1]",
                    path.display(),
                    r.score,
                    r.image_id
                )));
            }
            let meta = dims(r.image_id).expect("checked above");
            let [x, y, w, h] = r.bbox;
            let bbox = BBox::from_pixels(&PixelRect { x, y, w, h }, &meta)?.clamp_to_unit()?;
            Ok(Detection {
                bbox,
                score: r.score,
                category_id: r.category_id,
                model_id,
                image_id: r.image_id,
            })
        })
        .collect()
}

pub fn load_results(
    path: impl AsRef<Path>,
    index: &DatasetIndex,
    model_id: u32,
) -> Result<Vec<Detection>> {
    load_results_with(path, model_id, |id| index.images.get(&id).cloned())
}

pub fn results_to_coco(dets: &[Detection], index: &DatasetIndex) -> Result<Vec<CocoResult>> {
    let unknown: Vec<u64> = dets
        .iter()
        .map(|d| d.image_id)
        .filter(|id| !index.images.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::referential(unknown, Vec::new()));
    }
    dets.iter()
        .map(|d| {
            let r = d.bbox.to_pixels(&index.images[&d.image_id])?;
            Ok(CocoResult {
                image_id: d.image_id,
                category_id: d.category_id,
                bbox: [r.x, r.y, r.w, r.h],
                score: d.score,
            })
        })
        .collect()
}

pub fn save_results(dets: &[Detection], index: &DatasetIndex, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), &results_to_coco(dets, index)?)
}

/// Decodes a PNG or JPEG file to RGB8. Grayscale and alpha inputs are converted.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img_err = |source| Error::Image {
        path: path.to_owned(),
        source,
    };
    let reader = ImageReader::open(path)
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
    let rgb = reader.decode().map_err(img_err)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::new(w, h, rgb.into_raw())
}

/// Encodes by file extension: PNG losslessly, JPEG at quality 95.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img_err = |source| Error::Image {
        path: path.to_owned(),
        source,
    };
    let format = ImageFormat::from_path(path).map_err(img_err)?;
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    match format {
        ImageFormat::Jpeg => JpegEncoder::new_with_quality(&mut w, JPEG_QUALITY)
            .write_image(img.pixels(), img.width(), img.height(), ExtendedColorType::Rgb8)
            .map_err(img_err)?,
        ImageFormat::Png => image::codecs::png::PngEncoder::new(&mut w)
            .write_image(img.pixels(), img.width(), img.height(), ExtendedColorType::Rgb8)
            .map_err(img_err)?,
        other => {
            return Err(img_err(image::ImageError::Unsupported(
                image::error::UnsupportedError::from_format_and_kind(
                    other.into(),
                    image::error::UnsupportedErrorKind::Format(other.into()),
                ),
            )))
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}
