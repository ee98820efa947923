//! Canonical data model and box geometry.
//!
//! Boxes are stored as normalized `[x1, y1, x2, y2]` fractions of the image
//! width and height. Pixel `[x, y, w, h]` rectangles only appear at the COCO
//! I/O boundary, see [`BBox::to_pixels`] and [`BBox::from_pixels`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// Absolute pixel rectangle in COCO `[x, y, w, h]` layout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const UNIT: BBox = BBox {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };

    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Area, or zero for boxes with inverted corners.
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() <= 0.0
    }

    /// True when the box lies inside the unit square with ordered corners.
    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.x1)
            && unit(self.y1)
            && unit(self.x2)
            && unit(self.y2)
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn from_coords(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }

    /// Clips every coordinate into `[0, 1]` and restores corner ordering.
    pub fn clamp_to_unit(&self) -> Result<BBox> {
        clamp_to_unit(self)
    }

    pub fn hflip(&self) -> BBox {
        hflip(self)
    }

    pub fn to_pixels(&self, meta: &ImageMeta) -> Result<PixelRect> {
        let (w, h) = meta.dims()?;
        Ok(PixelRect {
            x: self.x1 * w,
            y: self.y1 * h,
            w: (self.x2 - self.x1) * w,
            h: (self.y2 - self.y1) * h,
        })
    }

    pub fn from_pixels(rect: &PixelRect, meta: &ImageMeta) -> Result<BBox> {
        let (w, h) = meta.dims()?;
        Ok(BBox {
            x1: rect.x / w,
            y1: rect.y / h,
            x2: (rect.x + rect.w) / w,
            y2: (rect.y + rect.h) / h,
        })
    }
}

/// Intersection over union. Zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

pub fn clamp_to_unit(b: &BBox) -> Result<BBox> {
    if !b.coords().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "non-finite box coordinates {:?}",
            b.coords()
        )));
    }
    let c = |v: f64| v.clamp(0.0, 1.0);
    let (x1, x2) = (c(b.x1), c(b.x2));
    let (y1, y2) = (c(b.y1), c(b.y2));
    Ok(BBox {
        x1: x1.min(x2),
        y1: y1.min(y2),
        x2: x1.max(x2),
        y2: y1.max(y2),
    })
}

/// Mirrors a box around the vertical center line of the image.
pub fn hflip(b: &BBox) -> BBox {
    BBox {
        x1: 1.0 - b.x2,
        y1: b.y1,
        x2: 1.0 - b.x1,
        y2: b.y2,
    }
}

/// A scored prediction, tagged with the model that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub category_id: u64,
    pub model_id: u32,
    pub image_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub category_id: u64,
    pub image_id: u64,
    /// COCO `iscrowd`: matched detections are neither rewarded nor penalized.
    pub ignore: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

impl ImageMeta {
    pub fn new(image_id: u64, width: u32, height: u32, file_name: impl Into<String>) -> Self {
        Self {
            image_id,
            width,
            height,
            file_name: file_name.into(),
        }
    }

    fn dims(&self) -> Result<(f64, f64)> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidMeta(format!(
                "image {} has zero dimension {}x{}",
                self.image_id, self.width, self.height
            )));
        }
        Ok((f64::from(self.width), f64::from(self.height)))
    }
}

/// Row-major RGB8 pixel plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::Shape(format!(
                "{}x{} RGB image needs {expected} bytes, got {}",
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        (y as usize * self.width as usize + x as usize) * 3
    }
}
