use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Dense `N³` samples of (sdf, rgb) on the lattice `−1 + 2i/(N−1)` per axis.
/// Index order is x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub n: usize,
    pub sdf: Vec<f32>,
    /// `3 · N³` values.
    pub rgb: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::Config(format!("grid resolution {n} < 8")));
        }
        Ok(VoxelGrid {
            n,
            sdf: vec![0.0; n * n * n],
            rgb: vec![0.0; 3 * n * n * n],
        })
    }

    /// Fills every point from `f(x) -> (sdf, rgb)`.
    pub fn from_fn(n: usize, f: impl Fn(&Vec3) -> (f64, [f64; 3]) + Sync) -> Result<Self> {
        use rayon::prelude::*;
        let mut g = VoxelGrid::new(n)?;
        let vals: Vec<(f64, [f64; 3])> = (0..n * n * n).into_par_iter().map(|i| f(&g.point_at(i))).collect();
        for (i, (s, c)) in vals.into_iter().enumerate() {
            g.sdf[i] = s as f32;
            for k in 0..3 {
                g.rgb[3 * i + k] = c[k] as f32;
            }
        }
        Ok(g)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    pub fn spacing(&self) -> f64 {
        2.0 / (self.n - 1) as f64
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.spacing()
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(self.coord(i), self.coord(j), self.coord(k))
    }

    pub fn point_at(&self, idx: usize) -> Vec3 {
        let n = self.n;
        self.point(idx % n, (idx / n) % n, idx / (n * n))
    }

    pub fn validate(&self) -> Result<()> {
        let n3 = self.n * self.n * self.n;
        if self.sdf.len() != n3 || self.rgb.len() != 3 * n3 {
            return Err(Error::ShapeMismatch("voxel grid buffers".into()));
        }
        if self.sdf.iter().chain(&self.rgb).any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite grid value".into()));
        }
        Ok(())
    }

    /// Grid mirrored in x.
    pub fn mirrored_x(&self) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let (a, b) = (self.index(i, j, k), self.index(n - 1 - i, j, k));
                    out.sdf[b] = self.sdf[a];
                    out.rgb[3 * b..3 * b + 3].copy_from_slice(&self.rgb[3 * a..3 * a + 3]);
                }
            }
        }
        out
    }
}
