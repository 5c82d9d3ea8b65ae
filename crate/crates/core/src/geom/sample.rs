use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{TriangleMesh, Vec2, Vec3};

/// Area-uniform surface samples with barycentric-interpolated attributes.
///
/// `colors`/`uvs` are `None` when the mesh lacks the attribute. Normals are
/// interpolated vertex normals when the mesh has them, face normals otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub colors: Option<Vec<Vec3>>,
    pub uvs: Option<Vec<Vec2>>,
    pub faces: Vec<u32>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` area-weighted uniform samples, deterministic in `seed`.
///
/// Positions depend only on the face's vertex set (not its winding), so a mesh
/// and its flipped copy yield identical points.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<SurfaceSamples> {
    if n == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let mut cdf = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts = mesh.vertices();
    let mut out = SurfaceSamples {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        colors: mesh.colors().map(|_| Vec::with_capacity(n)),
        uvs: mesh.uvs().map(|_| Vec::with_capacity(n)),
        faces: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let r: f64 = rng.random::<f64>() * total;
        let face = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
        let mut idx = mesh.faces()[face];
        idx.sort_unstable();
        let s = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let w = [1.0 - s, s * (1.0 - r2), s * r2];
        let lerp3 = |vals: &[Vec3]| {
            vals[idx[0] as usize] * w[0] + vals[idx[1] as usize] * w[1] + vals[idx[2] as usize] * w[2]
        };
        out.points.push(lerp3(verts));
        let normal = match mesh.normals() {
            Some(ns) => {
                let v = lerp3(ns);
                if v.norm() > 1e-12 {
                    v.normalize()
                } else {
                    mesh.face_normal(face)
                }
            }
            None => mesh.face_normal(face),
        };
        out.normals.push(normal);
        if let (Some(dst), Some(src)) = (out.colors.as_mut(), mesh.colors()) {
            dst.push(lerp3(src));
        }
        if let (Some(dst), Some(src)) = (out.uvs.as_mut(), mesh.uvs()) {
            dst.push(src[idx[0] as usize] * w[0] + src[idx[1] as usize] * w[1] + src[idx[2] as usize] * w[2]);
        }
        out.faces.push(face as u32);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> TriangleMesh {
        // areas 1.5 and 0.5
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(11.0, 0.0, 0.0),
            Vec3::new(10.0, 1.0, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap()
    }

    #[test]
    fn area_ratio_three_to_one() {
        let s = sample_surface(&two_triangles(), 40000, 7).unwrap();
        let a = s.faces.iter().filter(|&&f| f == 0).count() as f64;
        let b = s.faces.len() as f64 - a;
        let ratio = a / b;
        assert!((ratio - 3.0).abs() / 3.0 < 0.02, "ratio {ratio}");
    }

    #[test]
    fn single_sample_inside_triangle() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let s = sample_surface(&m, 1, 3).unwrap();
        let p = s.points[0];
        assert!(p.x >= 0.0 && p.y >= 0.0 && p.x + p.y <= 1.0 + 1e-15 && p.z == 0.0);
        assert!(s.colors.is_none() && s.uvs.is_none());
    }

    #[test]
    fn deterministic_and_winding_invariant() {
        let m = crate::geom::shapes::icosphere(1.0, 2);
        let a = sample_surface(&m, 500, 11).unwrap();
        let b = sample_surface(&m, 500, 11).unwrap();
        assert_eq!(a, b);
        let f = sample_surface(&m.flipped(), 500, 11).unwrap();
        assert_eq!(a.points, f.points);
        for (n, nf) in a.normals.iter().zip(&f.normals) {
            assert!((n + nf).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_samples_is_error() {
        assert!(sample_surface(&two_triangles(), 0, 0).is_err());
    }
}
