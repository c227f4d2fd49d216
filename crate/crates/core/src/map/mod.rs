//! Data-plane mathematics: coordinate projection, robust depth, feature
//! matching, multi-view combination, trajectory prediction, and the global
//! object map.

mod depth;
mod fuse;
mod matching;
mod projection;
mod store;

pub use depth::{estimate_depth, trimmed_patch_mean, DepthImage, DepthParams};
pub use fuse::{combine_location, extrapolate_history, predict_location};
pub use matching::match_object;
pub use projection::{camera_to_pixel, camera_to_world, pixel_to_camera};
pub use store::{GlobalMap, MapDeltaEntry, MapObject, Observation};

use crate::error::{CoreError, Result};

/// A detected object's 2D bounding box in pixel space.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBox {
    /// Pixel column of the box center.
    pub u0: f64,
    /// Pixel row of the box center.
    pub v0: f64,
    pub width: f64,
    pub height: f64,
    /// Detection confidence in [0, 1].
    pub confidence: f64,
    pub class_id: u16,
}

impl PixelBox {
    pub fn validate(&self, intr: &CameraIntrinsics) -> Result<()> {
        if !(self.u0 >= 0.0 && self.u0 < intr.width_px as f64) {
            return Err(CoreError::invalid(format!(
                "box center u0={} outside image width {}",
                self.u0, intr.width_px
            )));
        }
        if !(self.v0 >= 0.0 && self.v0 < intr.height_px as f64) {
            return Err(CoreError::invalid(format!(
                "box center v0={} outside image height {}",
                self.v0, intr.height_px
            )));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(CoreError::invalid("box width/height must be positive"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(CoreError::invalid("box confidence must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Camera focal length (pixels) and image resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl CameraIntrinsics {
    pub fn new(focal_px: f64, width_px: u32, height_px: u32) -> Result<Self> {
        if !(focal_px > 0.0) {
            return Err(CoreError::invalid("focal length must be positive"));
        }
        if width_px == 0 || height_px == 0 {
            return Err(CoreError::invalid("image resolution must be positive"));
        }
        Ok(Self {
            focal_px,
            width_px,
            height_px,
        })
    }
}

/// A point in the camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A point in the world frame, meters. The world frame is right-handed with
/// z up; ground-plane distances use (x, y) only.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    /// Squared distance in the ground plane (altitude ignored).
    pub fn ground_dist_sq(&self, other: &WorldPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn ground_dist(&self, other: &WorldPoint) -> f64 {
        self.ground_dist_sq(other).sqrt()
    }
}

/// Homogeneous camera-to-world transform.
///
/// Validated on construction: bottom row (0,0,0,1) and an orthonormal
/// rotation block within 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    m: [[f64; 4]; 4],
}

impl Pose {
    pub fn new(m: [[f64; 4]; 4]) -> Result<Self> {
        const TOL: f64 = 1e-6;
        let bottom = m[3];
        if (bottom[0]).abs() > TOL
            || (bottom[1]).abs() > TOL
            || (bottom[2]).abs() > TOL
            || (bottom[3] - 1.0).abs() > TOL
        {
            return Err(CoreError::invalid("pose bottom row must be (0,0,0,1)"));
        }
        // R Rᵀ must be the identity within tolerance.
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > TOL {
                    return Err(CoreError::invalid("pose rotation block not orthonormal"));
                }
            }
        }
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("pose entries must be finite"));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { m }
    }

    pub fn translation(tx: f64, ty: f64, tz: f64) -> Self {
        let mut p = Self::identity();
        p.m[0][3] = tx;
        p.m[1][3] = ty;
        p.m[2][3] = tz;
        p
    }

    /// Rotation about the vertical (z) axis by `angle` radians, then
    /// translation. Positive yaw maps +x toward +y.
    pub fn yaw_translation(angle: f64, tx: f64, ty: f64, tz: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let m = [
            [c, -s, 0.0, tx],
            [s, c, 0.0, ty],
            [0.0, 0.0, 1.0, tz],
            [0.0, 0.0, 0.0, 1.0],
        ];
        Self { m }
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    /// Inverse transform (exploits the rigid structure).
    pub fn inverse(&self) -> Pose {
        let r = &self.m;
        let mut inv = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                inv[i][j] = r[j][i];
            }
        }
        for (i, row) in inv.iter_mut().take(3).enumerate() {
            row[3] = -(0..3).map(|k| r[k][i] * r[k][3]).sum::<f64>();
            let _ = i;
        }
        inv[3][3] = 1.0;
        Pose { m: inv }
    }
}

/// Unitless latent feature vector attached to one view of an object.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Squared L2 distance to another feature of the same length.
    pub fn dist_sq(&self, other: &FeatureVector) -> f64 {
        debug_assert_eq!(self.0.len(), other.0.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// One vehicle's view of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Pixel-space box when produced by a camera path; synthetic detections
    /// carry none.
    pub bbox: Option<PixelBox>,
    pub depth_m: Option<f64>,
    pub class_id: u16,
    pub confidence: f64,
    pub feature: FeatureVector,
    pub location: WorldPoint,
    pub source_vehicle: u32,
    pub timestamp: f64,
}

/// Tunables of the matching/fusion pipeline.
#[derive(Debug, Clone)]
pub struct MapParams {
    /// Weight of the squared geo-distance term in the match cost.
    pub match_weight: f64,
    /// Candidate gate radius, meters.
    pub match_gate_m: f64,
    /// Acceptance threshold on the combined match cost; above it a new
    /// object is created.
    pub match_threshold: f64,
    /// Most-recent features retained per object.
    pub feature_cap: usize,
    /// Observations within this window of the newest one are fused together.
    pub fusion_window_s: f64,
    /// Objects not updated for longer than this are expired.
    pub ttl_s: f64,
    /// Most-recent fused history entries retained per object.
    pub history_cap: usize,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            match_weight: 0.05,
            match_gate_m: 100.0,
            match_threshold: 25.0,
            feature_cap: 8,
            fusion_window_s: 0.1,
            ttl_s: 3.0,
            history_cap: 20,
        }
    }
}
