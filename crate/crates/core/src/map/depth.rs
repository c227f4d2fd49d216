//! Robust object-depth estimation from a depth image.
//!
//! Bounding boxes are rectangles while objects are not, so averaging every
//! pixel in the box skews the estimate with background depth. Instead a
//! handful of small square patches is sampled around the box center; the
//! highest and lowest patch means are discarded and the rest averaged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

use super::PixelBox;

/// Depth image in meters; 0 marks an invalid reading.
#[derive(Debug, Clone)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(CoreError::invalid("depth data length != width*height"));
        }
        if data.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(CoreError::invalid("depth entries must be finite and >= 0"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn uniform(width: usize, height: usize, depth: f64) -> Self {
        Self {
            width,
            height,
            data: vec![depth; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn at(&self, u: i64, v: i64) -> Option<f64> {
        if u < 0 || v < 0 || u as usize >= self.width || v as usize >= self.height {
            return None;
        }
        Some(self.data[v as usize * self.width + u as usize])
    }

    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        self.data[v * self.width + u] = depth;
    }
}

/// Patch-sampling knobs.
#[derive(Debug, Clone, Copy)]
pub struct DepthParams {
    pub patch_count: usize,
    pub patch_size: usize,
}

impl Default for DepthParams {
    fn default() -> Self {
        Self {
            patch_count: 8,
            patch_size: 4,
        }
    }
}

/// Mean of patch means after discarding the single maximum and minimum.
/// With fewer than three means there is nothing left to average robustly.
pub fn trimmed_patch_mean(means: &[f64]) -> Result<f64> {
    if means.len() < 3 {
        return Err(CoreError::NoDepth(format!(
            "only {} usable patches, need at least 3",
            means.len()
        )));
    }
    let mut sorted = means.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let kept = &sorted[1..sorted.len() - 1];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Estimate the object depth inside `bbox`.
///
/// Patch centers are drawn from a seeded generator uniformly inside the
/// middle half of the box. Each patch's mean is taken over valid (> 0)
/// pixels; patches with no valid pixel are dropped.
pub fn estimate_depth(
    img: &DepthImage,
    bbox: &PixelBox,
    params: &DepthParams,
    seed: u64,
) -> Result<f64> {
    if bbox.u0 < 0.0 || bbox.v0 < 0.0 || bbox.u0 >= img.width as f64 || bbox.v0 >= img.height as f64
    {
        return Err(CoreError::invalid("box center outside depth image"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_w = bbox.width / 4.0;
    let half_h = bbox.height / 4.0;
    let half_patch = params.patch_size as i64 / 2;

    let mut means = Vec::with_capacity(params.patch_count);
    for _ in 0..params.patch_count {
        let cu = bbox.u0 + rng.gen_range(-half_w..=half_w);
        let cv = bbox.v0 + rng.gen_range(-half_h..=half_h);
        let u0 = cu.round() as i64 - half_patch;
        let v0 = cv.round() as i64 - half_patch;
        let mut sum = 0.0;
        let mut n = 0usize;
        for dv in 0..params.patch_size as i64 {
            for du in 0..params.patch_size as i64 {
                if let Some(d) = img.at(u0 + du, v0 + dv) {
                    if d > 0.0 {
                        sum += d;
                        n += 1;
                    }
                }
            }
        }
        if n > 0 {
            means.push(sum / n as f64);
        }
    }
    trimmed_patch_mean(&means)
}
