//! Landmark-anchored regions of interest.
//!
//! Box geometry is expressed in units of the inter-ocular distance (IOD) so
//! that regions scale with the face. Pixel `(i, j)` covers the unit square
//! `[i, i+1) × [j, j+1)`; boxes and landmarks live in that continuous frame.

use std::collections::BTreeMap;
use std::fmt;

use image::{DynamicImage, GrayImage as Luma8Image, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark_io::{Landmark, LandmarkSet};

#[derive(Debug, Error, PartialEq)]
pub enum RoiError {
    #[error("degenerate landmarks: {0}")]
    Geometry(String),
    #[error("{kind}: {message}")]
    Crop { kind: RegionKind, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionKind {
    LeftEye,
    RightEye,
    LeftEyeBottom,
    RightEyeBottom,
    Cheek,
    Mouth,
}

impl RegionKind {
    pub const ALL: [RegionKind; 6] = [
        RegionKind::LeftEye,
        RegionKind::RightEye,
        RegionKind::LeftEyeBottom,
        RegionKind::RightEyeBottom,
        RegionKind::Cheek,
        RegionKind::Mouth,
    ];

    /// Fixed patch size `(width, height)` after resampling.
    pub const fn patch_size(self) -> (usize, usize) {
        match self {
            RegionKind::LeftEye | RegionKind::RightEye => (64, 32),
            RegionKind::LeftEyeBottom | RegionKind::RightEyeBottom => (64, 24),
            RegionKind::Cheek => (64, 64),
            RegionKind::Mouth => (80, 40),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionKind::LeftEye => "left_eye",
            RegionKind::RightEye => "right_eye",
            RegionKind::LeftEyeBottom => "left_eye_bottom",
            RegionKind::RightEyeBottom => "right_eye_bottom",
            RegionKind::Cheek => "cheek",
            RegionKind::Mouth => "mouth",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl RegionBox {
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        RegionBox {
            x0: cx - w / 2.0,
            y0: cy - h / 2.0,
            x1: cx + w / 2.0,
            y1: cy + h / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn intersect(&self, other: &RegionBox) -> Option<RegionBox> {
        let b = RegionBox {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (b.x1 > b.x0 && b.y1 > b.y0).then_some(b)
    }
}

const EYE_W: f64 = 0.70;
const EYE_H: f64 = 0.45;
const EYE_BOTTOM_OFFSET: f64 = 0.35;
const EYE_BOTTOM_W: f64 = 0.70;
const EYE_BOTTOM_H: f64 = 0.30;
const CHEEK_SIDE: f64 = 0.60;
const MOUTH_MARGIN: f64 = 0.25;

/// The six region boxes for a face, before clipping to the image.
pub fn region_boxes(landmarks: &LandmarkSet) -> Result<BTreeMap<RegionKind, RegionBox>, RoiError> {
    let iod = landmarks.inter_ocular_distance();
    if !(iod.is_finite() && iod > 0.0) {
        return Err(RoiError::Geometry(format!(
            "inter-ocular distance must be positive, got {iod}"
        )));
    }
    let left = landmarks.get(Landmark::LeftEyeCenter);
    let right = landmarks.get(Landmark::RightEyeCenter);
    let mouth_left = landmarks.get(Landmark::MouthLeftCorner);

    let mouth_pts = [
        Landmark::MouthLeftCorner,
        Landmark::MouthRightCorner,
        Landmark::MouthTop,
        Landmark::MouthBottom,
    ]
    .map(|lm| landmarks.get(lm));
    let (mut mx0, mut my0, mut mx1, mut my1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in mouth_pts {
        mx0 = mx0.min(p.x);
        my0 = my0.min(p.y);
        mx1 = mx1.max(p.x);
        my1 = my1.max(p.y);
    }
    let (mw, mh) = (mx1 - mx0, my1 - my0);
    let mouth = RegionBox {
        x0: mx0 - MOUTH_MARGIN * mw,
        y0: my0 - MOUTH_MARGIN * mh,
        x1: mx1 + MOUTH_MARGIN * mw,
        y1: my1 + MOUTH_MARGIN * mh,
    };

    let mut boxes = BTreeMap::new();
    boxes.insert(
        RegionKind::LeftEye,
        RegionBox::centered(left.x, left.y, EYE_W * iod, EYE_H * iod),
    );
    boxes.insert(
        RegionKind::RightEye,
        RegionBox::centered(right.x, right.y, EYE_W * iod, EYE_H * iod),
    );
    boxes.insert(
        RegionKind::LeftEyeBottom,
        RegionBox::centered(
            left.x,
            left.y + EYE_BOTTOM_OFFSET * iod,
            EYE_BOTTOM_W * iod,
            EYE_BOTTOM_H * iod,
        ),
    );
    boxes.insert(
        RegionKind::RightEyeBottom,
        RegionBox::centered(
            right.x,
            right.y + EYE_BOTTOM_OFFSET * iod,
            EYE_BOTTOM_W * iod,
            EYE_BOTTOM_H * iod,
        ),
    );
    boxes.insert(
        RegionKind::Cheek,
        RegionBox::centered(
            (left.x + mouth_left.x) / 2.0,
            (left.y + mouth_left.y) / 2.0,
            CHEEK_SIDE * iod,
            CHEEK_SIDE * iod,
        ),
    );
    boxes.insert(RegionKind::Mouth, mouth);
    Ok(boxes)
}

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "pixel buffer size mismatch");
        GrayImage { width, height, data }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(width: usize, height: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    /// Luma conversion with weights 0.299/0.587/0.114, scaled to `[0, 1]`.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                ((0.299 * r + 0.587 * g + 0.114 * b) / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        GrayImage::new(w as usize, h as usize, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    /// 8-bit copy, intensities rounded to the nearest level.
    pub fn to_luma8(&self) -> Luma8Image {
        Luma8Image::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
        })
    }

    pub fn bounds(&self) -> RegionBox {
        RegionBox {
            x0: 0.0,
            y0: 0.0,
            x1: self.width as f64,
            y1: self.height as f64,
        }
    }

    /// Bilinear sample at continuous position `(x, y)`, pixel centers at
    /// half-integers, edges replicated.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let ix = (fx.floor() as usize).min(self.width.saturating_sub(2));
        let iy = (fy.floor() as usize).min(self.height.saturating_sub(2));
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let ix1 = (ix + 1).min(self.width - 1);
        let iy1 = (iy + 1).min(self.height - 1);
        let top = self.get(ix, iy) * (1.0 - tx) + self.get(ix1, iy) * tx;
        let bottom = self.get(ix, iy1) * (1.0 - tx) + self.get(ix1, iy1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// A fixed-size grayscale crop of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiPatch {
    pub kind: RegionKind,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    /// Clipped source box the patch was resampled from.
    pub source: RegionBox,
}

impl RoiPatch {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn to_luma8(&self) -> Luma8Image {
        Luma8Image::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.get(x as usize, y as usize) * 255.0).round() as u8])
        })
    }
}

/// Clips `region` to the image and resamples it bilinearly to the fixed size
/// for `kind`. Out-of-frame parts are dropped, never padded.
pub fn crop_and_resize(img: &GrayImage, region: &RegionBox, kind: RegionKind) -> Result<RoiPatch, RoiError> {
    if img.width == 0 || img.height == 0 {
        return Err(RoiError::Crop {
            kind,
            message: "image is empty".into(),
        });
    }
    let clipped = region.intersect(&img.bounds()).ok_or_else(|| RoiError::Crop {
        kind,
        message: format!(
            "box {region:?} has no area inside the {}x{} image",
            img.width, img.height
        ),
    })?;
    let (pw, ph) = kind.patch_size();
    let sx = clipped.width() / pw as f64;
    let sy = clipped.height() / ph as f64;
    let mut pixels = Vec::with_capacity(pw * ph);
    for v in 0..ph {
        let y = clipped.y0 + (v as f64 + 0.5) * sy;
        for u in 0..pw {
            let x = clipped.x0 + (u as f64 + 0.5) * sx;
            pixels.push(img.sample(x, y).clamp(0.0, 1.0));
        }
    }
    Ok(RoiPatch {
        kind,
        width: pw,
        height: ph,
        pixels,
        source: clipped,
    })
}

/// Crops all six regions of one face, or fails on the first region that
/// cannot be cropped.
pub fn extract_all(img: &GrayImage, landmarks: &LandmarkSet) -> Result<BTreeMap<RegionKind, RoiPatch>, RoiError> {
    region_boxes(landmarks)?
        .into_iter()
        .map(|(kind, b)| crop_and_resize(img, &b, kind).map(|p| (kind, p)))
        .collect()
}
