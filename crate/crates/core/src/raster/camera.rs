//! Orthographic cameras.
//!
//! Pixel convention (used by projection, feature querying and rasterization):
//! pixel `(i, j)` has its center at continuous coordinate `(i, j)` and covers
//! `[i-0.5, i+0.5] × [j-0.5, j+0.5]`; `+u` points right, `+v` points down.
//! The view square `[-span, span]²` maps onto the image's outer edges, so
//!
//! ```text
//! u = (c.x / span + 1) · W/2 − 0.5
//! v = (1 − c.y / span) · H/2 − 0.5
//! depth = c.z
//! ```
//!
//! where `c = R·x` and the rows of `R` are (right, up, forward). Smaller depth
//! is closer to the camera.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoCamera {
    rotation: Mat3,
    span: f64,
    width: usize,
    height: usize,
}

impl OrthoCamera {
    pub fn new(rotation: Mat3, span: f64, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!("image size {width}x{height}")));
        }
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::InvalidCamera(format!("span {span}")));
        }
        let err = (rotation.transpose() * rotation - Mat3::identity()).amax();
        if !(err <= 1e-9) {
            return Err(Error::InvalidCamera(format!(
                "rotation not orthonormal (|RᵀR − I| = {err:e})"
            )));
        }
        Ok(OrthoCamera {
            rotation,
            span,
            width,
            height,
        })
    }

    pub fn identity(size: usize) -> Self {
        OrthoCamera::new(Mat3::identity(), 1.0, size, size).expect("valid camera")
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Same view, different image size.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        OrthoCamera::new(self.rotation, self.span, width, height)
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.row(0).transpose()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.row(1).transpose()
    }

    /// Direction the camera looks along (rays travel this way).
    pub fn view_dir(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * x
    }

    /// World direction expressed in the image frame (right, up, toward viewer).
    pub fn to_image_frame(&self, d: &Vec3) -> Vec3 {
        let c = self.rotation * d;
        Vec3::new(c.x, c.y, -c.z)
    }

    /// Returns `(u, v, depth)`.
    pub fn project(&self, x: &Vec3) -> (f64, f64, f64) {
        let c = self.rotation * x;
        let u = (c.x / self.span + 1.0) * self.width as f64 * 0.5 - 0.5;
        let v = (1.0 - c.y / self.span) * self.height as f64 * 0.5 - 0.5;
        (u, v, c.z)
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let cx = ((u + 0.5) * 2.0 / self.width as f64 - 1.0) * self.span;
        let cy = (1.0 - (v + 0.5) * 2.0 / self.height as f64) * self.span;
        self.rotation.transpose() * Vec3::new(cx, cy, depth)
    }
}

fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Shared image/view parameters for a front/back camera pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewSetup {
    pub span: f64,
    pub width: usize,
    pub height: usize,
    pub elevation: f64,
}

impl Default for ViewSetup {
    fn default() -> Self {
        ViewSetup {
            span: 1.0,
            width: 512,
            height: 512,
            elevation: 0.0,
        }
    }
}

impl ViewSetup {
    pub fn square(size: usize) -> Self {
        ViewSetup {
            width: size,
            height: size,
            ..ViewSetup::default()
        }
    }
}

/// Front camera orbiting the subject by `azimuth` degrees about +y, and the
/// back camera obtained by a further 180° turn about the vertical axis.
///
/// At azimuth 0 the front camera sits on +z looking toward −z and sees a
/// +z-facing subject unmirrored (subject's +x on image right).
pub fn make_view_pair(azimuth: f64, setup: &ViewSetup) -> Result<(OrthoCamera, OrthoCamera)> {
    if !azimuth.is_finite() || !setup.elevation.is_finite() {
        return Err(Error::InvalidCamera("non-finite angle".into()));
    }
    let base = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
    // world→camera: undo the orbit, then apply the base frame
    let front = base * rot_x(-setup.elevation) * rot_y(azimuth).transpose();
    let back = front * rot_y(180.0).transpose();
    Ok((
        OrthoCamera::new(front, setup.span, setup.width, setup.height)?,
        OrthoCamera::new(back, setup.span, setup.width, setup.height)?,
    ))
}

/// `n` azimuths evenly covering `[0, 360)`.
pub fn orbit_azimuths(n: usize) -> Vec<f64> {
    (0..n).map(|i| 360.0 * i as f64 / n as f64).collect()
}
