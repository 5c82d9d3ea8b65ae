//! Assembly of the decoder input `[f_front, f_back, p]` for 3D query points,
//! shared by training and inference.

use crate::embed::{scatter, BodyPrior, FeatureMap, Taps, EMBEDDING_DIM};
use crate::geom::Vec3;
use crate::net::Real;
use crate::raster::OrthoCamera;

/// Parameter-independent part of a query: bilinear stencils into the front and
/// back feature maps plus the body embedding (zeros when disabled).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointQuery {
    pub front: Taps,
    pub back: Taps,
    pub embed: [f64; EMBEDDING_DIM],
}

/// Geometry of the feature maps a query is resolved against.
#[derive(Debug, Clone)]
pub struct QueryFrame<'a> {
    pub front: &'a OrthoCamera,
    pub back: &'a OrthoCamera,
    /// Feature-map size `(h, w)` and stride relative to the image.
    pub map_h: usize,
    pub map_w: usize,
    pub stride: f64,
    pub body: Option<&'a BodyPrior>,
}

impl QueryFrame<'_> {
    fn taps(&self, cam: &OrthoCamera, x: &Vec3) -> Taps {
        let (u, v, _) = cam.project(x);
        Taps::bilinear(self.map_h, self.map_w, u / self.stride, v / self.stride)
    }

    pub fn query(&self, x: &Vec3) -> PointQuery {
        let embed = match self.body {
            Some(b) => b.embed_point(x, self.front, self.back).to_features(self.front),
            None => [0.0; EMBEDDING_DIM],
        };
        PointQuery {
            front: self.taps(self.front, x),
            back: self.taps(self.back, x),
            embed,
        }
    }
}

/// Row-major `queries.len() × (2D + 7)` decoder inputs.
pub fn build_rows<T: Real>(queries: &[PointQuery], front: &FeatureMap<T>, back: &FeatureMap<T>) -> Vec<T> {
    let d = front.dim;
    let width = 2 * d + EMBEDDING_DIM;
    let mut rows = vec![T::zero(); queries.len() * width];
    for (q, row) in queries.iter().zip(rows.chunks_mut(width)) {
        front.gather(&q.front, &mut row[..d]);
        back.gather(&q.back, &mut row[d..2 * d]);
        for (r, &e) in row[2 * d..].iter_mut().zip(&q.embed) {
            *r = T::c(e);
        }
    }
    rows
}

/// Transpose of [`build_rows`] for the feature columns.
pub fn scatter_rows<T: Real>(queries: &[PointQuery], drows: &[T], dim: usize, dfront: &mut [T], dback: &mut [T]) {
    let width = 2 * dim + EMBEDDING_DIM;
    for (q, row) in queries.iter().zip(drows.chunks(width)) {
        scatter(dfront, dim, &q.front, &row[..dim]);
        scatter(dback, dim, &q.back, &row[dim..2 * dim]);
    }
}
