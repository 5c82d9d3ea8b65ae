//! Table-driven marching cubes over a [`VoxelGrid`].
//!
//! Grid values `≤ iso` count as inside. Vertices are shared through a global
//! edge id, so the output is watertight wherever the surface stays inside the
//! grid; zero-length edges (exact ties) keep their degenerate triangles rather
//! than breaking connectivity.

use std::collections::HashMap;

use rayon::prelude::*;

use super::grid::VoxelGrid;
use super::mc_tables::{DX, DY, DZ, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};
use crate::error::Result;
use crate::geom::{TriangleMesh, Vec3};

struct Slab {
    tris: Vec<[u64; 3]>,
    verts: Vec<(u64, Vec3, Vec3)>,
}

/// Id of the lattice edge from point `idx` along `axis`.
#[inline]
fn edge_id(idx: usize, axis: usize) -> u64 {
    idx as u64 * 3 + axis as u64
}

fn slab(grid: &VoxelGrid, k: usize, iso: f32) -> Slab {
    let n = grid.n;
    let mut out = Slab {
        tris: Vec::new(),
        verts: Vec::new(),
    };
    let mut seen: HashMap<u64, ()> = HashMap::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let corner = |c: usize| grid.index(i + DX[c], j + DY[c], k + DZ[c]);
            let mut case = 0usize;
            for c in 0..8 {
                if grid.sdf[corner(c)] <= iso {
                    case |= 1 << c;
                }
            }
            let mask = EDGE_TABLE[case];
            if mask == 0 {
                continue;
            }
            let mut ids = [0u64; 12];
            for (e, id) in ids.iter_mut().enumerate() {
                if mask & (1 << e) == 0 {
                    continue;
                }
                let [a, b] = EDGE_CORNERS[e];
                let (ia, ib) = (corner(a), corner(b));
                let (lo, hi) = if ia < ib { (ia, ib) } else { (ib, ia) };
                let axis = match hi - lo {
                    1 => 0,
                    d if d == n => 1,
                    _ => 2,
                };
                *id = edge_id(lo, axis);
                if seen.insert(*id, ()).is_none() {
                    let (va, vb) = (grid.sdf[lo] as f64, grid.sdf[hi] as f64);
                    let t = if va == vb { 0.0 } else { ((iso as f64 - va) / (vb - va)).clamp(0.0, 1.0) };
                    let (pa, pb) = (grid.point_at(lo), grid.point_at(hi));
                    let ca = Vec3::new(grid.rgb[3 * lo] as f64, grid.rgb[3 * lo + 1] as f64, grid.rgb[3 * lo + 2] as f64);
                    let cb = Vec3::new(grid.rgb[3 * hi] as f64, grid.rgb[3 * hi + 1] as f64, grid.rgb[3 * hi + 2] as f64);
                    out.verts.push((*id, pa + (pb - pa) * t, ca + (cb - ca) * t));
                }
            }
            for t in TRI_TABLE[case].chunks(3) {
                if t[0] < 0 {
                    break;
                }
                out.tris.push([ids[t[0] as usize], ids[t[1] as usize], ids[t[2] as usize]]);
            }
        }
    }
    out
}

/// Extracts the `iso` level set with per-vertex colors interpolated from the
/// grid. An all-inside or all-outside grid yields an empty mesh.
pub fn marching_cubes(grid: &VoxelGrid, iso: f32) -> Result<TriangleMesh> {
    grid.validate()?;
    let slabs: Vec<Slab> = (0..grid.n - 1).into_par_iter().map(|k| slab(grid, k, iso)).collect();
    let mut index: HashMap<u64, u32> = HashMap::new();
    let mut verts = Vec::new();
    let mut colors = Vec::new();
    for s in &slabs {
        for &(id, p, c) in &s.verts {
            index.entry(id).or_insert_with(|| {
                verts.push(p);
                colors.push(c.map(|v| v.clamp(0.0, 1.0)));
                (verts.len() - 1) as u32
            });
        }
    }
    let faces: Vec<[u32; 3]> = slabs
        .iter()
        .flat_map(|s| s.tris.iter().map(|t| t.map(|id| index[&id])))
        .collect();
    let mut mesh = TriangleMesh::from_parts_unchecked(verts, faces);
    mesh.set_colors_unchecked(colors);
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(n: usize, r: f64) -> VoxelGrid {
        VoxelGrid::from_fn(n, |x| (x.norm() - r, [x.x * 0.5 + 0.5, 0.2, 0.9])).unwrap()
    }

    #[test]
    fn sphere_vertices_near_radius_and_closed() {
        let g = sphere(64, 0.5);
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(!m.is_empty());
        let h = 2.0 / 64.0;
        for v in m.vertices() {
            assert!((v.norm() - 0.5).abs() <= 1.5 * h);
        }
        assert!(m.is_closed());
        // outward orientation: positive enclosed volume
        let vol: f64 = (0..m.faces().len())
            .map(|f| {
                let [a, b, c] = m.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        assert!((vol - 4.0 / 3.0 * std::f64::consts::PI * 0.125).abs() < 0.01, "{vol}");
    }

    #[test]
    fn constant_grids_are_empty() {
        let mut g = VoxelGrid::new(9).unwrap();
        g.sdf.fill(1.0);
        assert!(marching_cubes(&g, 0.0).unwrap().is_empty());
        g.sdf.fill(-1.0);
        assert!(marching_cubes(&g, 0.0).unwrap().is_empty());
    }

    #[test]
    fn independent_of_thread_count() {
        let g = VoxelGrid::from_fn(40, |x| {
            let s = ((x - Vec3::new(0.1, 0.0, 0.0)).norm() - 0.3).min(x.norm() - 0.5 + (5.0 * x.y).sin() * 0.1);
            (s, [0.5; 3])
        })
        .unwrap();
        let a = marching_cubes(&g, 0.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| marching_cubes(&g, 0.0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn exact_zero_ties_stay_closed() {
        // a box whose faces land exactly on lattice planes
        let g = VoxelGrid::from_fn(17, |x| {
            let s = x.iter().map(|c| c.abs()).fold(0.0f64, f64::max) - 0.5;
            (s, [0.0; 3])
        })
        .unwrap();
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(m.is_closed());
    }
}
