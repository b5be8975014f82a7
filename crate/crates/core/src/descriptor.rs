//! Dense SIFT descriptors and per-dimension standardization.
//!
//! Keypoints sit on a regular grid: top-left anchors at multiples of
//! [`GRID_STEP`], each covering a [`SUPPORT`]×[`SUPPORT`] window split into
//! 4×4 cells with 8 orientation bins. Windows that would leave the patch are
//! skipped, so the descriptor length of every region is a compile-time
//! constant.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roi::{RegionKind, RoiPatch};

pub const GRID_STEP: usize = 8;
pub const SUPPORT: usize = 16;
pub const SPATIAL_BINS: usize = 4;
pub const ORIENTATION_BINS: usize = 8;
pub const BLOCK_LEN: usize = SPATIAL_BINS * SPATIAL_BINS * ORIENTATION_BINS;
pub const CLAMP: f64 = 0.2;
/// Gaussian window sigma, half the keypoint support.
pub const WINDOW_SIGMA: f64 = SUPPORT as f64 / 2.0;
pub const STD_FLOOR: f64 = 1e-8;

/// Keypoints along one axis of `len` pixels.
pub const fn grid_count(len: usize) -> usize {
    if len < SUPPORT {
        0
    } else {
        (len - SUPPORT) / GRID_STEP + 1
    }
}

pub const fn region_descriptor_len(kind: RegionKind) -> usize {
    let (w, h) = kind.patch_size();
    grid_count(w) * grid_count(h) * BLOCK_LEN
}

pub const EYES_LEN: usize = 2 * region_descriptor_len(RegionKind::LeftEye);
pub const EYE_BOTTOMS_LEN: usize = 2 * region_descriptor_len(RegionKind::LeftEyeBottom);
pub const CHEEK_LEN: usize = region_descriptor_len(RegionKind::Cheek);
pub const MOUTH_LEN: usize = region_descriptor_len(RegionKind::Mouth);

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("missing {0} patch")]
    MissingPatch(RegionKind),
    #[error("{0}")]
    Input(String),
}

/// Descriptor groups; eye and eye-bottom groups concatenate the left and
/// right patches in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorGroup {
    Eyes,
    EyeBottoms,
    Cheek,
    Mouth,
}

impl DescriptorGroup {
    pub const ALL: [DescriptorGroup; 4] = [
        DescriptorGroup::Eyes,
        DescriptorGroup::EyeBottoms,
        DescriptorGroup::Cheek,
        DescriptorGroup::Mouth,
    ];

    pub fn regions(self) -> &'static [RegionKind] {
        match self {
            DescriptorGroup::Eyes => &[RegionKind::LeftEye, RegionKind::RightEye],
            DescriptorGroup::EyeBottoms => &[RegionKind::LeftEyeBottom, RegionKind::RightEyeBottom],
            DescriptorGroup::Cheek => &[RegionKind::Cheek],
            DescriptorGroup::Mouth => &[RegionKind::Mouth],
        }
    }

    pub const fn descriptor_len(self) -> usize {
        match self {
            DescriptorGroup::Eyes => EYES_LEN,
            DescriptorGroup::EyeBottoms => EYE_BOTTOMS_LEN,
            DescriptorGroup::Cheek => CHEEK_LEN,
            DescriptorGroup::Mouth => MOUTH_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueGroupDescriptor {
    pub group: DescriptorGroup,
    pub values: Vec<f64>,
}

/// Dense SIFT over one patch; keypoint blocks concatenated in raster order.
pub fn dense_sift(patch: &RoiPatch) -> Vec<f64> {
    let (w, h) = (patch.width, patch.height);
    let (gx, gy) = (grid_count(w), grid_count(h));
    let mut magnitude = vec![0.0; w * h];
    let mut angle = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let dx = (patch.get((x + 1).min(w - 1), y) - patch.get(x.saturating_sub(1), y)) / 2.0;
            let dy = (patch.get(x, (y + 1).min(h - 1)) - patch.get(x, y.saturating_sub(1))) / 2.0;
            magnitude[y * w + x] = dx.hypot(dy);
            angle[y * w + x] = dy.atan2(dx).rem_euclid(TAU);
        }
    }

    let window = window_weights();
    let mut out = Vec::with_capacity(gx * gy * BLOCK_LEN);
    for ky in 0..gy {
        for kx in 0..gx {
            let mut block = [0.0; BLOCK_LEN];
            accumulate_block(
                &mut block,
                &magnitude,
                &angle,
                w,
                kx * GRID_STEP,
                ky * GRID_STEP,
                &window,
            );
            normalize_block(&mut block);
            out.extend_from_slice(&block);
        }
    }
    out
}

fn window_weights() -> [f64; SUPPORT * SUPPORT] {
    let mut weights = [0.0; SUPPORT * SUPPORT];
    let c = SUPPORT as f64 / 2.0;
    for dy in 0..SUPPORT {
        for dx in 0..SUPPORT {
            let rx = dx as f64 + 0.5 - c;
            let ry = dy as f64 + 0.5 - c;
            weights[dy * SUPPORT + dx] = (-(rx * rx + ry * ry) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        }
    }
    weights
}

/// Trilinear binning of one keypoint window into 4×4×8 bins.
fn accumulate_block(
    block: &mut [f64; BLOCK_LEN],
    magnitude: &[f64],
    angle: &[f64],
    stride: usize,
    x0: usize,
    y0: usize,
    window: &[f64; SUPPORT * SUPPORT],
) {
    let cell = (SUPPORT / SPATIAL_BINS) as f64;
    for dy in 0..SUPPORT {
        // cell centres map to integer bin coordinates
        let by = (dy as f64 + 0.5) / cell - 0.5;
        for dx in 0..SUPPORT {
            let idx = (y0 + dy) * stride + x0 + dx;
            let m = magnitude[idx] * window[dy * SUPPORT + dx];
            if m == 0.0 {
                continue;
            }
            let bx = (dx as f64 + 0.5) / cell - 0.5;
            let bo = angle[idx] / TAU * ORIENTATION_BINS as f64;
            let (ox, wx) = split(bx);
            let (oy, wy) = split(by);
            let (oo, wo) = split(bo);
            for (iy, wyv) in [(oy, 1.0 - wy), (oy + 1, wy)] {
                if !(0..SPATIAL_BINS as i64).contains(&iy) || wyv == 0.0 {
                    continue;
                }
                for (ix, wxv) in [(ox, 1.0 - wx), (ox + 1, wx)] {
                    if !(0..SPATIAL_BINS as i64).contains(&ix) || wxv == 0.0 {
                        continue;
                    }
                    for (io, wov) in [(oo, 1.0 - wo), (oo + 1, wo)] {
                        if wov == 0.0 {
                            continue;
                        }
                        let o = io.rem_euclid(ORIENTATION_BINS as i64) as usize;
                        let bin = (iy as usize * SPATIAL_BINS + ix as usize) * ORIENTATION_BINS + o;
                        block[bin] += m * wyv * wxv * wov;
                    }
                }
            }
        }
    }
}

fn split(v: f64) -> (i64, f64) {
    let f = v.floor();
    (f as i64, v - f)
}

/// Unit-normalize, clamp at [`CLAMP`], renormalize. All-zero stays zero.
fn normalize_block(block: &mut [f64]) {
    let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    for v in block.iter_mut() {
        *v = (*v / norm).min(CLAMP);
    }
    let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in block.iter_mut() {
            *v /= norm;
        }
    }
}

/// Builds the descriptor for `group` from a face's patches.
pub fn describe_group(
    patches: &BTreeMap<RegionKind, RoiPatch>,
    group: DescriptorGroup,
) -> Result<CueGroupDescriptor, DescriptorError> {
    let mut values = Vec::with_capacity(group.descriptor_len());
    for &kind in group.regions() {
        let patch = patches.get(&kind).ok_or(DescriptorError::MissingPatch(kind))?;
        if (patch.width, patch.height) != kind.patch_size() {
            return Err(DescriptorError::Input(format!(
                "{kind} patch is {}x{}, expected {:?}",
                patch.width,
                patch.height,
                kind.patch_size()
            )));
        }
        values.extend(dense_sift(patch));
    }
    debug_assert_eq!(values.len(), group.descriptor_len());
    Ok(CueGroupDescriptor { group, values })
}

/// Per-dimension z-scoring learned on training descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Sample mean and population standard deviation, floored at
    /// [`STD_FLOOR`].
    pub fn fit<V: AsRef<[f64]>>(descriptors: &[V]) -> Result<Standardizer, DescriptorError> {
        let first = descriptors
            .first()
            .ok_or_else(|| DescriptorError::Input("cannot fit a standardizer on zero descriptors".into()))?;
        let dim = first.as_ref().len();
        if let Some((i, _)) = descriptors.iter().enumerate().find(|(_, d)| d.as_ref().len() != dim) {
            return Err(DescriptorError::Input(format!(
                "descriptor {i} has length {}, expected {dim}",
                descriptors[i].as_ref().len()
            )));
        }
        let n = descriptors.len() as f64;
        let mut mean = vec![0.0; dim];
        for d in descriptors {
            for (m, v) in mean.iter_mut().zip(d.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for d in descriptors {
            for ((s, v), m) in var.iter_mut().zip(d.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, DescriptorError> {
        if v.len() != self.mean.len() {
            return Err(DescriptorError::Input(format!(
                "descriptor has length {}, standardizer expects {}",
                v.len(),
                self.mean.len()
            )));
        }
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}
