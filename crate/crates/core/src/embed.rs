//! Pixel-aligned feature querying and the body-anchored positional embedding.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::geom::{Bvh, TriangleMesh, Vec2, Vec3};
use crate::raster::OrthoCamera;

/// Bilinear stencil: four texel indices (row-major `y·W + x`) and weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

impl Taps {
    /// Bilinear taps on an `h × w` grid at texel coordinate `(tu, tv)`; texel
    /// centers sit at integer coordinates and out-of-range queries clamp to
    /// the border texels.
    pub fn bilinear(h: usize, w: usize, tu: f64, tv: f64) -> Self {
        let clamp = |t: f64, n: usize| {
            let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, (n - 1) as f64) };
            let i0 = (t.floor() as usize).min(n.saturating_sub(2));
            let f = if n == 1 { 0.0 } else { t - i0 as f64 };
            (i0, (i0 + 1).min(n - 1), f)
        };
        let (x0, x1, fx) = clamp(tu, w);
        let (y0, y1, fy) = clamp(tv, h);
        Taps {
            index: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
            weight: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        }
    }
}

/// `H'×W'×D` feature grid aligned with the image seen by `camera`.
///
/// Texel `(i, j)` is the receptive-field center of image pixel
/// `(i·stride, j·stride)` (3×3, pad-1 convolutions keep centers aligned), so an
/// image pixel coordinate maps to texel coordinate `pixel / stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T = f32> {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Vec<T>,
    pub camera: OrthoCamera,
    pub stride: f64,
}

impl<T: Float> FeatureMap<T> {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<T>, camera: OrthoCamera, stride: f64) -> Result<Self> {
        if data.len() != height * width * dim || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature map {height}x{width}x{dim} with {} values",
                data.len()
            )));
        }
        Ok(FeatureMap {
            height,
            width,
            dim,
            data,
            camera,
            stride,
        })
    }

    pub fn texel(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn taps(&self, tu: f64, tv: f64) -> Taps {
        Taps::bilinear(self.height, self.width, tu, tv)
    }

    /// Texel coordinate of a 3D point's projection.
    pub fn texel_coords(&self, x: &Vec3) -> (f64, f64) {
        let (u, v, _) = self.camera.project(x);
        (u / self.stride, v / self.stride)
    }

    pub fn point_taps(&self, x: &Vec3) -> Taps {
        let (tu, tv) = self.texel_coords(x);
        self.taps(tu, tv)
    }

    pub fn gather(&self, taps: &Taps, out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for k in 0..4 {
            let w = T::from(taps.weight[k]).unwrap();
            if w == T::zero() {
                continue;
            }
            for (o, &f) in out.iter_mut().zip(self.texel(taps.index[k])) {
                *o = *o + w * f;
            }
        }
    }

    /// Bilinear query at texel coordinate `(tu, tv)`.
    pub fn query(&self, tu: f64, tv: f64) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.gather(&self.taps(tu, tv), &mut out);
        out
    }

    pub fn query_point(&self, x: &Vec3) -> Vec<T> {
        let (tu, tv) = self.texel_coords(x);
        self.query(tu, tv)
    }
}

/// Adds `grad` (one D-vector) into `dst` (a map-sized gradient buffer) through
/// the transpose of the bilinear stencil.
pub fn scatter<T: Float>(dst: &mut [T], dim: usize, taps: &Taps, grad: &[T]) {
    for k in 0..4 {
        let w = T::from(taps.weight[k]).unwrap();
        if w == T::zero() {
            continue;
        }
        let base = taps.index[k] * dim;
        for (d, &g) in dst[base..base + dim].iter_mut().zip(grad) {
            *d = *d + w * g;
        }
    }
}

/// Visibility of the body anchor point in the two input views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Front,
    Back,
    Neither,
}

impl Visibility {
    pub fn label(self) -> f64 {
        match self {
            Visibility::Front => 1.0,
            Visibility::Back => -1.0,
            Visibility::Neither => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionalEmbedding {
    /// Signed distance to the body surface.
    pub d: f64,
    /// `x − x_c`, world frame.
    pub n: Vec3,
    pub uv: Vec2,
    pub visibility: Visibility,
    /// Closest body face (ties → lowest index).
    pub face: usize,
}

pub const EMBEDDING_DIM: usize = 7;

impl PositionalEmbedding {
    /// `[d, n (front image frame), u, v, vis]`.
    pub fn to_features(&self, front: &OrthoCamera) -> [f64; EMBEDDING_DIM] {
        let n = front.to_image_frame(&self.n);
        [self.d, n.x, n.y, n.z, self.uv.x, self.uv.y, self.visibility.label()]
    }
}

/// Body mesh with per-vertex UVs and its acceleration structure.
#[derive(Debug, Clone)]
pub struct BodyPrior {
    mesh: TriangleMesh,
    bvh: Bvh,
}

impl BodyPrior {
    pub fn new(mesh: TriangleMesh) -> Result<Self> {
        if mesh.uvs().is_none() {
            return Err(Error::MissingAttribute("uv"));
        }
        let bvh = Bvh::build(&mesh)?;
        Ok(BodyPrior { mesh, bvh })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Embedding of `x` relative to the body, with visibility of the anchor
    /// `x_c` tested by a ray toward each camera (front wins ties).
    pub fn embed_point(&self, x: &Vec3, front: &OrthoCamera, back: &OrthoCamera) -> PositionalEmbedding {
        let (d, cp) = self.bvh.signed_closest(x);
        let f = self.mesh.faces()[cp.face];
        let uvs = self.mesh.uvs().expect("checked at construction");
        let uv = uvs[f[0] as usize] * cp.barycentric[0]
            + uvs[f[1] as usize] * cp.barycentric[1]
            + uvs[f[2] as usize] * cp.barycentric[2];
        let visible = |cam: &OrthoCamera| self.bvh.raycast(&cp.point, &(-cam.view_dir())).is_none();
        let visibility = if visible(front) {
            Visibility::Front
        } else if visible(back) {
            Visibility::Back
        } else {
            Visibility::Neither
        };
        PositionalEmbedding {
            d,
            n: x - cp.point,
            uv,
            visibility,
            face: cp.face,
        }
    }
}
