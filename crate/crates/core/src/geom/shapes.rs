//! Procedural test shapes. All are closed and outward-oriented unless noted.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::geom::{TriangleMesh, Vec2, Vec3};

/// Axis-aligned cube of the given side length centered at the origin (12 triangles).
pub fn unit_cube(side: f64) -> TriangleMesh {
    box_mesh(Vec3::repeat(-side / 2.0), Vec3::repeat(side / 2.0))
}

pub fn box_mesh(lo: Vec3, hi: Vec3) -> TriangleMesh {
    let v = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let faces = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    TriangleMesh::new(v, faces).expect("valid box")
}

/// Icosphere built by repeated midpoint subdivision of an icosahedron.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    TriangleMesh::new(verts, faces).expect("valid icosphere")
}

/// Largest distance between the sphere of `radius` and the flat facets of `mesh`
/// (vertices lie on the sphere, so this is the worst facet-center sag).
pub fn chord_error(mesh: &TriangleMesh, radius: f64) -> f64 {
    (0..mesh.faces().len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            // circumradius of the facet bounds the sag
            let (la, lb, lc) = ((b - c).norm(), (c - a).norm(), (a - b).norm());
            let area = mesh.face_area(f);
            let r_circ = la * lb * lc / (4.0 * area);
            radius - (radius * radius - r_circ * r_circ).max(0.0).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Closed capped cylinder along +y with per-vertex cylindrical UVs.
pub fn cylinder(center: Vec3, radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut verts = Vec::new();
    let mut uvs = Vec::new();
    let y0 = center.y - height / 2.0;
    let y1 = center.y + height / 2.0;
    for &y in &[y0, y1] {
        for i in 0..segments {
            let a = 2.0 * PI * i as f64 / segments as f64;
            verts.push(Vec3::new(center.x + radius * a.cos(), y, center.z + radius * a.sin()));
            uvs.push(Vec2::new(i as f64 / segments as f64, (y - y0) / height));
        }
    }
    let bottom_c = verts.len() as u32;
    verts.push(Vec3::new(center.x, y0, center.z));
    uvs.push(Vec2::new(0.5, 0.0));
    let top_c = verts.len() as u32;
    verts.push(Vec3::new(center.x, y1, center.z));
    uvs.push(Vec2::new(0.5, 1.0));
    let s = segments as u32;
    let mut faces = Vec::new();
    for i in 0..s {
        let j = (i + 1) % s;
        let (b0, b1, t0, t1) = (i, j, i + s, j + s);
        faces.push([b0, t0, t1]);
        faces.push([b0, t1, b1]);
        faces.push([bottom_c, b0, b1]);
        faces.push([top_c, t1, t0]);
    }
    TriangleMesh::new(verts, faces)
        .and_then(|m| m.with_uvs(uvs))
        .expect("valid cylinder")
}

/// Axis-aligned square in the plane z = `z`, facing +z, with unit UVs.
pub fn square(lo: (f64, f64), hi: (f64, f64), z: f64) -> TriangleMesh {
    let verts = vec![
        Vec3::new(lo.0, lo.1, z),
        Vec3::new(hi.0, lo.1, z),
        Vec3::new(hi.0, hi.1, z),
        Vec3::new(lo.0, hi.1, z),
    ];
    let uvs = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ];
    TriangleMesh::new(verts, vec![[0, 1, 2], [0, 2, 3]])
        .and_then(|m| m.with_uvs(uvs))
        .expect("valid square")
}

/// Spherical-coordinate UVs for a mesh centered at the origin.
pub fn spherical_uvs(mesh: &TriangleMesh) -> Vec<Vec2> {
    mesh.vertices()
        .iter()
        .map(|v| {
            let r = v.norm().max(1e-12);
            let u = (v.x.atan2(v.z) / (2.0 * PI) + 0.5).clamp(0.0, 1.0);
            let w = ((v.y / r).clamp(-1.0, 1.0).acos() / PI).clamp(0.0, 1.0);
            Vec2::new(u, w)
        })
        .collect()
}
