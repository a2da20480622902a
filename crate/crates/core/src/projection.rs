//! Image-to-ground-plane projection.
//!
//! Maps pixels below the camera horizon to points on the vehicle's motion
//! plane and back. The camera is forward-facing with zero roll and yaw; the
//! only mount angles are a downward pitch, a height above ground, and a
//! planar offset from the vehicle origin.

use thiserror::Error;

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(ProjectionError::InvalidCamera("focal lengths must be positive"));
        }
        if self.cx < 0.0 || self.cx >= self.width as f64 || self.cy < 0.0 || self.cy >= self.height as f64 {
            return Err(ProjectionError::InvalidCamera("principal point outside image"));
        }
        Ok(())
    }
}

/// Camera mounting relative to the vehicle body frame (x forward, y left).
/// Positive pitch tilts the optical axis toward the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMount {
    pub height_above_ground: f64,
    pub pitch: f64,
    pub longitudinal_offset: f64,
    pub lateral_offset: f64,
}

impl CameraMount {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.height_above_ground <= 0.0 {
            return Err(ProjectionError::InvalidCamera("camera height must be positive"));
        }
        if self.pitch.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(ProjectionError::InvalidCamera("|pitch| must be below pi/2"));
        }
        Ok(())
    }
}

/// A point on the motion plane, in the vehicle body frame (x forward, y left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("pixel row {row} is at or above the horizon row {horizon}")]
    AboveHorizon { row: f64, horizon: f64 },
    #[error("ground point is behind the camera")]
    BehindCamera,
}

/// Guard band below the horizon inside which projection is refused; ranges
/// explode numerically as the ray becomes parallel to the ground.
pub const HORIZON_GUARD_PX: f64 = 0.5;

/// Image row at which the optical ray runs parallel to the ground plane.
/// Pixels at or above this row never intersect the plane.
pub fn horizon_row(intr: &CameraIntrinsics, mount: &CameraMount) -> f64 {
    intr.cy - intr.fy * mount.pitch.tan()
}

/// Intersect the ray through `(row, col)` with the ground plane and express
/// the hit point in the vehicle body frame.
pub fn pixel_to_ground(
    row: f64,
    col: f64,
    intr: &CameraIntrinsics,
    mount: &CameraMount,
) -> Result<GroundPoint, ProjectionError> {
    let horizon = horizon_row(intr, mount);
    if row <= horizon + HORIZON_GUARD_PX {
        return Err(ProjectionError::AboveHorizon { row, horizon });
    }
    let r = (col - intr.cx) / intr.fx; // rightward
    let d = (row - intr.cy) / intr.fy; // downward
    let (sin_p, cos_p) = mount.pitch.sin_cos();
    // Ray direction in the body frame: camera right = -y, camera down tilts
    // into -z and -x, optical axis tilts into +x and -z.
    let denom = sin_p + d * cos_p;
    let t = mount.height_above_ground / denom;
    Ok(GroundPoint {
        x: mount.longitudinal_offset + t * (cos_p - d * sin_p),
        y: mount.lateral_offset - t * r,
    })
}

/// Inverse of [`pixel_to_ground`] on its valid domain. May return sub-pixel
/// coordinates outside the image bounds; the caller clips.
pub fn ground_to_pixel(
    p: GroundPoint,
    intr: &CameraIntrinsics,
    mount: &CameraMount,
) -> Result<(f64, f64), ProjectionError> {
    let x = p.x - mount.longitudinal_offset;
    let y = p.y - mount.lateral_offset;
    let h = mount.height_above_ground;
    let (sin_p, cos_p) = mount.pitch.sin_cos();
    // Ground point relative to the camera origin, in the camera basis.
    let forward = x * cos_p + h * sin_p;
    if forward <= 0.0 {
        return Err(ProjectionError::BehindCamera);
    }
    let right = -y;
    let down = -x * sin_p + h * cos_p;
    Ok((
        intr.cy + intr.fy * down / forward,
        intr.cx + intr.fx * right / forward,
    ))
}
