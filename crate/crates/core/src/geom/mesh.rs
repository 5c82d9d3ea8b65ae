use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};

/// Area below which a triangle is considered degenerate and dropped at load.
pub const DEGENERATE_AREA: f64 = 1e-12;

const UNIT_NORMAL_TOL: f64 = 1e-6;

/// Indexed triangle mesh with optional per-vertex colors, normals and UVs.
///
/// Invariants (checked by [`TriangleMesh::new`] and the `with_*` builders):
/// face indices are in range, no face has area at or below [`DEGENERATE_AREA`],
/// every attribute array has one entry per vertex, and normals are unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    colors: Option<Vec<Vec3>>,
    normals: Option<Vec<Vec3>>,
    uvs: Option<Vec<Vec2>>,
}

impl TriangleMesh {
    /// Builds a mesh, dropping degenerate faces with a warning.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let n = vertices.len();
        if let Some((fi, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&i| i as usize >= n))
        {
            return Err(Error::InvalidMesh(format!(
                "face {fi} references vertex {:?} but mesh has {n} vertices",
                f
            )));
        }
        let before = faces.len();
        let faces: Vec<[u32; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices, f) > DEGENERATE_AREA)
            .collect();
        if faces.len() != before {
            log::warn!(
                "dropped {} degenerate triangle(s) with area <= {DEGENERATE_AREA:e}",
                before - faces.len()
            );
        }
        Ok(Self {
            vertices,
            faces,
            colors: None,
            normals: None,
            uvs: None,
        })
    }

    /// Builds a mesh without validation. Used for extraction outputs where
    /// exact zero-area triangles must be kept to preserve connectivity.
    pub(crate) fn from_parts_unchecked(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            faces,
            colors: None,
            normals: None,
            uvs: None,
        }
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Result<Self> {
        self.check_len("colors", colors.len())?;
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        self.check_len("normals", normals.len())?;
        if let Some(i) = normals
            .iter()
            .position(|n| (n.norm() - 1.0).abs() > UNIT_NORMAL_TOL)
        {
            return Err(Error::InvalidMesh(format!(
                "normal {i} has length {}",
                normals[i].norm()
            )));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_uvs(mut self, uvs: Vec<Vec2>) -> Result<Self> {
        self.check_len("uvs", uvs.len())?;
        self.uvs = Some(uvs);
        Ok(self)
    }

    pub(crate) fn set_colors_unchecked(&mut self, colors: Vec<Vec3>) {
        self.colors = Some(colors);
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{what} has {len} entries, mesh has {} vertices",
                self.vertices.len()
            )));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> Option<&[Vec3]> {
        self.colors.as_deref()
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn uvs(&self) -> Option<&[Vec2]> {
        self.uvs.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Unit normal following the face winding (counter-clockwise = front).
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        triangle_area(&self.vertices, &self.faces[face])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounds of the referenced and unreferenced vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }

    /// Angle-weighted vertex normals.
    pub fn compute_vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for f in 0..self.faces.len() {
            let n = self.face_normal(f);
            let idx = self.faces[f];
            let tri = self.triangle(f);
            for k in 0..3 {
                acc[idx[k] as usize] += corner_angle(&tri, k) * n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vec3::z()
                }
            })
            .collect()
    }

    /// Reverses face winding and negates stored normals.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for f in &mut out.faces {
            f.swap(1, 2);
        }
        if let Some(ns) = &mut out.normals {
            for n in ns {
                *n = -*n;
            }
        }
        out
    }

    /// Applies `x -> scale * x + offset` to positions (normals are unchanged
    /// for positive uniform scale).
    pub fn transformed(&self, scale: f64, offset: Vec3) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = *v * scale + offset;
        }
        out
    }

    /// Applies a rigid motion `x -> R x + t`.
    pub fn rigid_transformed(&self, rotation: &nalgebra::Matrix3<f64>, translation: Vec3) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = rotation * *v + translation;
        }
        if let Some(ns) = &mut out.normals {
            for n in ns {
                *n = (rotation * *n).normalize();
            }
        }
        out
    }

    /// Mirrors across the plane x = 0, fixing winding so the orientation is kept.
    pub fn mirrored_x(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            v.x = -v.x;
        }
        for f in &mut out.faces {
            f.swap(1, 2);
        }
        if let Some(ns) = &mut out.normals {
            for n in ns {
                n.x = -n.x;
            }
        }
        out
    }

    /// Counts how many faces use each undirected edge.
    pub fn edge_face_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when every edge is shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.edge_face_counts().values().all(|&c| c == 2)
    }

    /// Concatenates two meshes. Attributes survive only if both carry them.
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let base = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        let join = |a: Option<&Vec<Vec3>>, b: Option<&Vec<Vec3>>| match (a, b) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Self {
            vertices,
            faces,
            colors: join(self.colors.as_ref(), other.colors.as_ref()),
            normals: join(self.normals.as_ref(), other.normals.as_ref()),
            uvs: match (&self.uvs, &other.uvs) {
                (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
                _ => None,
            },
        }
    }
}

pub(crate) fn triangle_area(vertices: &[Vec3], f: &[u32; 3]) -> f64 {
    let a = vertices[f[0] as usize];
    let b = vertices[f[1] as usize];
    let c = vertices[f[2] as usize];
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Interior angle of triangle `tri` at corner `k`.
pub(crate) fn corner_angle(tri: &[Vec3; 3], k: usize) -> f64 {
    let p = tri[k];
    let e1 = tri[(k + 1) % 3] - p;
    let e2 = tri[(k + 2) % 3] - p;
    let denom = e1.norm() * e2.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (e1.dot(&e2) / denom).clamp(-1.0, 1.0).acos()
}

/// Uniform scale + translation mapping a mesh into the canonical cube.
///
/// The forward map is `x' = scale * (x + offset)`; offset is applied first.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub offset: [f64; 3],
}

/// Fraction of the [-1,1] cube that the normalized mesh's largest extent fills.
pub const NORMALIZED_EXTENT: f64 = 0.9;

impl Normalization {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: [0.0; 3],
        }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        (x + Vec3::from(self.offset)) * self.scale
    }

    pub fn invert(&self, x: &Vec3) -> Vec3 {
        x / self.scale - Vec3::from(self.offset)
    }

    pub fn apply_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        mesh.transformed(self.scale, Vec3::from(self.offset) * self.scale)
    }

    pub fn invert_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        mesh.transformed(1.0 / self.scale, -Vec3::from(self.offset))
    }
}

/// Centers the mesh bounding box at the origin and scales its largest extent to
/// 0.9 of the [-1,1] cube.
pub fn normalize_to_cube(mesh: &TriangleMesh) -> Result<(TriangleMesh, Normalization)> {
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyGeometry)?;
    let extent = (hi - lo).max();
    if extent <= 0.0 {
        return Err(Error::Degenerate("mesh has zero extent".into()));
    }
    let center = (lo + hi) * 0.5;
    let norm = Normalization {
        scale: 2.0 * NORMALIZED_EXTENT / extent,
        offset: (-center).into(),
    };
    Ok((norm.apply_mesh(mesh), norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    #[test]
    fn rejects_out_of_range_face() {
        let err = TriangleMesh::new(vec![Vec3::zeros(); 2], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn drops_degenerate_faces() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.faces().len(), 1);
    }

    #[test]
    fn rejects_non_unit_normals() {
        let m = shapes::unit_cube(1.0);
        let n = vec![Vec3::new(0.0, 0.0, 2.0); m.vertices().len()];
        assert!(m.with_normals(n).is_err());
    }

    #[test]
    fn cube_is_closed_and_flip_preserves_closedness() {
        let m = shapes::unit_cube(1.0);
        assert!(m.is_closed());
        assert!(m.flipped().is_closed());
        assert!((m.surface_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_offset_cube() {
        let cube = shapes::unit_cube(4.0).transformed(1.0, Vec3::new(10.0, 0.0, 0.0));
        let (out, norm) = normalize_to_cube(&cube).unwrap();
        assert!((norm.scale - 0.45).abs() < 1e-12);
        assert_eq!(norm.offset, [-10.0, 0.0, 0.0]);
        let (lo, hi) = out.bounds().unwrap();
        assert!((hi - lo).max() - 1.8 < 1e-12);
        assert!(lo.min() >= -1.0 && hi.max() <= 1.0);
    }

    #[test]
    fn normalize_near_identity_and_round_trip() {
        let cube = shapes::unit_cube(1.9);
        let (out, norm) = normalize_to_cube(&cube).unwrap();
        assert!((0.9..=1.0).contains(&norm.scale));
        let back = norm.invert_mesh(&out);
        for (a, b) in back.vertices().iter().zip(cube.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
