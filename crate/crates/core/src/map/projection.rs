//! Pixel → camera → world coordinate transforms.

use crate::error::{CoreError, Result};

use super::{CameraIntrinsics, CameraPoint, PixelBox, Pose, WorldPoint};

/// Project a detection's box center at the given depth into the camera frame.
///
/// With image center (0.5·W, 0.5·H) and focal length f in pixels:
/// `x = -(d·(v0 - 0.5·H))/f`, `y = (d·(u0 - 0.5·W))/f`, `z = d`.
pub fn pixel_to_camera(
    bbox: &PixelBox,
    depth: f64,
    intr: &CameraIntrinsics,
) -> Result<CameraPoint> {
    if !(depth > 0.0) {
        return Err(CoreError::invalid(format!(
            "depth must be positive, got {depth}"
        )));
    }
    bbox.validate(intr)?;
    let f = intr.focal_px;
    let x = -(depth * (bbox.v0 - 0.5 * intr.height_px as f64)) / f;
    let y = (depth * (bbox.u0 - 0.5 * intr.width_px as f64)) / f;
    Ok(CameraPoint { x, y, z: depth })
}

/// Recover the pixel location and depth that [`pixel_to_camera`] maps to `p`.
/// Used as the algebraic inverse in round-trip checks.
pub fn camera_to_pixel(p: &CameraPoint, intr: &CameraIntrinsics) -> (f64, f64, f64) {
    let d = p.z;
    let u0 = 0.5 * intr.width_px as f64 + p.y * intr.focal_px / d;
    let v0 = 0.5 * intr.height_px as f64 - p.x * intr.focal_px / d;
    (u0, v0, d)
}

/// Apply the homogeneous camera-to-world transform.
pub fn camera_to_world(p: &CameraPoint, pose: &Pose) -> WorldPoint {
    let m = pose.matrix();
    let v = [p.x, p.y, p.z, 1.0];
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2] + m[i][3] * v[3];
    }
    WorldPoint::new(out[0], out[1], out[2])
}
