//! Bounding-volume hierarchy over triangles with exact closest-point,
//! signed-distance and raycast queries.
//!
//! Results are bitwise identical to an exhaustive scan over all triangles:
//! both paths evaluate the same per-triangle primitive and break distance ties
//! toward the lowest face index.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::mesh::corner_angle;
use crate::geom::query::{closest_point_on_triangle, ray_triangle, solid_angle, Feature};
use crate::geom::{TriangleMesh, Vec3};

/// Maximum triangles per leaf.
pub const LEAF_SIZE: usize = 4;
/// Minimum ray parameter accepted as a hit; avoids self-intersection at surface origins.
pub const RAY_EPSILON: f64 = 1e-6;
const SAH_BINS: usize = 16;
/// Query-time box inflation so rounding in the per-triangle primitives never
/// lets a box test prune a face the exhaustive scan would select.
const BOX_PAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPointResult {
    pub point: Vec3,
    pub face: usize,
    pub barycentric: [f64; 3],
    pub distance: f64,
    pub feature: Feature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
    pub barycentric: [f64; 3],
}

/// How the inside/outside sign of a signed distance is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMethod {
    /// Angle-weighted pseudonormal at the closest feature. Exact for closed meshes.
    Pseudonormal,
    /// Generalized winding number (> 1/2 is inside). Tolerates small holes; O(faces) per query.
    WindingNumber,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: first index into `order`. Internal: index of the right child
    /// (the left child always follows its parent).
    start_or_right: u32,
    /// Number of triangles for leaves, 0 for internal nodes.
    count: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }

    fn dist_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let (lo, hi) = (self.lo[k] - BOX_PAD, self.hi[k] + BOX_PAD);
            let v = if p[k] < lo {
                lo - p[k]
            } else if p[k] > hi {
                p[k] - hi
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test; returns entry parameter if the ray overlaps the box within `t_max`.
    fn ray_entry(&self, o: &Vec3, inv_d: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let mut ta = (self.lo[k] - BOX_PAD - o[k]) * inv_d[k];
            let mut tb = (self.hi[k] + BOX_PAD - o[k]) * inv_d[k];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            // NaN from 0 * inf means the ray lies in the slab plane: keep bounds.
            if !ta.is_nan() {
                t0 = t0.max(ta);
            }
            if !tb.is_nan() {
                t1 = t1.min(tb);
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Immutable BVH over a triangle mesh. Safe to query from many threads.
#[derive(Debug, Clone)]
pub struct Bvh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    nodes: Vec<Node>,
    order: Vec<u32>,
    face_normals: Vec<Vec3>,
    vertex_pseudonormals: Vec<Vec3>,
    edge_pseudonormals: HashMap<(u32, u32), Vec3>,
    sign_method: SignMethod,
}

impl Bvh {
    /// Builds the hierarchy; the sign method is pseudonormal for closed meshes
    /// and winding number otherwise.
    pub fn build(mesh: &TriangleMesh) -> Result<Self> {
        let method = if mesh.is_closed() {
            SignMethod::Pseudonormal
        } else {
            SignMethod::WindingNumber
        };
        Self::build_with_sign(mesh, method)
    }

    pub fn build_with_sign(mesh: &TriangleMesh, sign_method: SignMethod) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::EmptyGeometry);
        }
        let faces = mesh.faces().to_vec();
        let vertices = mesh.vertices().to_vec();
        let n = faces.len();
        let mut tri_lo = Vec::with_capacity(n);
        let mut tri_hi = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for f in 0..n {
            let [a, b, c] = mesh.triangle(f);
            tri_lo.push(a.inf(&b).inf(&c));
            tri_hi.push(a.sup(&b).sup(&c));
            centroids.push((a + b + c) / 3.0);
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        let ctx = BuildCtx {
            lo: &tri_lo,
            hi: &tri_hi,
            centroids: &centroids,
        };
        ctx.build(&mut nodes, &mut order, 0, n);

        let face_normals: Vec<Vec3> = (0..n).map(|f| mesh.face_normal(f)).collect();
        let mut vertex_pseudonormals = vec![Vec3::zeros(); vertices.len()];
        let mut edge_pseudonormals: HashMap<(u32, u32), Vec3> = HashMap::with_capacity(n * 3 / 2);
        for (f, fc) in faces.iter().enumerate() {
            let tri = mesh.triangle(f);
            let nf = face_normals[f];
            for k in 0..3 {
                vertex_pseudonormals[fc[k] as usize] += corner_angle(&tri, k) * nf;
                let (a, b) = (fc[k], fc[(k + 1) % 3]);
                *edge_pseudonormals
                    .entry((a.min(b), a.max(b)))
                    .or_insert_with(Vec3::zeros) += nf;
            }
        }
        Ok(Self {
            vertices,
            faces,
            nodes,
            order,
            face_normals,
            vertex_pseudonormals,
            edge_pseudonormals,
            sign_method,
        })
    }

    pub fn sign_method(&self) -> SignMethod {
        self.sign_method
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Root bounding box.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        (self.nodes[0].lo, self.nodes[0].hi)
    }

    /// Every face id, in the order the leaves reference them.
    pub fn leaf_faces(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .flat_map(|n| {
                self.order[n.start_or_right as usize..(n.start_or_right + n.count) as usize]
                    .iter()
                    .copied()
            })
            .collect()
    }

    /// Checks that every internal node's box contains its children's boxes.
    pub fn is_nested(&self) -> bool {
        fn contains(p: &Node, c: &Node) -> bool {
            (0..3).all(|k| p.lo[k] <= c.lo[k] && c.hi[k] <= p.hi[k])
        }
        self.nodes.iter().enumerate().all(|(i, n)| {
            n.is_leaf()
                || (contains(n, &self.nodes[i + 1])
                    && contains(n, &self.nodes[n.start_or_right as usize]))
        })
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.face_normals[face]
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Closest point on the surface; ties go to the lowest face index.
    pub fn closest_point(&self, x: &Vec3) -> ClosestPointResult {
        let mut best_d2 = f64::INFINITY;
        let mut best_face = usize::MAX;
        let mut best = None;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].dist_sq(x)));
        while let Some((ni, lb)) = stack.pop() {
            if lb > best_d2 {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                let s = node.start_or_right as usize;
                for &f in &self.order[s..s + node.count as usize] {
                    let f = f as usize;
                    let [a, b, c] = self.triangle(f);
                    let tp = closest_point_on_triangle(x, &a, &b, &c);
                    let d2 = (x - tp.point).norm_squared();
                    if d2 < best_d2 || (d2 == best_d2 && f < best_face) {
                        best_d2 = d2;
                        best_face = f;
                        best = Some(tp);
                    }
                }
            } else {
                let l = ni + 1;
                let r = node.start_or_right;
                let dl = self.nodes[l as usize].dist_sq(x);
                let dr = self.nodes[r as usize].dist_sq(x);
                // push the farther child first so the nearer one is popped next
                if dl <= dr {
                    stack.push((r, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((r, dr));
                }
            }
        }
        let tp = best.expect("non-empty bvh");
        ClosestPointResult {
            point: tp.point,
            face: best_face,
            barycentric: tp.barycentric,
            distance: best_d2.sqrt(),
            feature: tp.feature,
        }
    }

    /// Pseudonormal of the feature the closest point lies on.
    pub fn pseudonormal(&self, cp: &ClosestPointResult) -> Vec3 {
        let f = self.faces[cp.face];
        match cp.feature {
            Feature::Face => self.face_normals[cp.face],
            Feature::Edge(a, b) => {
                let (va, vb) = (f[a as usize], f[b as usize]);
                self.edge_pseudonormals[&(va.min(vb), va.max(vb))]
            }
            Feature::Vertex(k) => self.vertex_pseudonormals[f[k as usize] as usize],
        }
    }

    /// Generalized winding number at `x` (1 inside a closed outward mesh, 0 outside).
    pub fn winding_number(&self, x: &Vec3) -> f64 {
        let total: f64 = (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                solid_angle(x, &a, &b, &c)
            })
            .sum();
        total / (4.0 * PI)
    }

    /// Sign (+1 outside, -1 inside) for a query with known closest point.
    pub fn sign_at(&self, x: &Vec3, cp: &ClosestPointResult) -> f64 {
        match self.sign_method {
            SignMethod::Pseudonormal => {
                if (x - cp.point).dot(&self.pseudonormal(cp)) < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            SignMethod::WindingNumber => {
                if self.winding_number(x) > 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Signed distance: negative inside, positive outside, magnitude equal to
    /// the closest-point distance.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.signed_closest(x).0
    }

    /// Signed distance together with the closest-point record.
    pub fn signed_closest(&self, x: &Vec3) -> (f64, ClosestPointResult) {
        let cp = self.closest_point(x);
        if cp.distance == 0.0 {
            return (0.0, cp);
        }
        (cp.distance * self.sign_at(x, &cp), cp)
    }

    /// Nearest intersection with `t > RAY_EPSILON`; ties go to the lowest face index.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        self.raycast_within(origin, dir, f64::INFINITY)
    }

    /// Like [`Bvh::raycast`] but ignores hits beyond `t_max`.
    pub fn raycast_within(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best_t = t_max;
        let mut best: Option<RayHit> = None;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        if let Some(t0) = self.nodes[0].ray_entry(origin, &inv, best_t) {
            stack.push((0, t0));
        }
        while let Some((ni, t_entry)) = stack.pop() {
            if t_entry > best_t {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                let s = node.start_or_right as usize;
                for &f in &self.order[s..s + node.count as usize] {
                    let f = f as usize;
                    let [a, b, c] = self.triangle(f);
                    if let Some((t, u, v)) = ray_triangle(origin, dir, &a, &b, &c) {
                        if t > RAY_EPSILON && t <= t_max {
                            let better = match &best {
                                None => true,
                                Some(h) => t < h.t || (t == h.t && f < h.face),
                            };
                            if better {
                                best_t = t;
                                best = Some(RayHit {
                                    t,
                                    face: f,
                                    barycentric: [1.0 - u - v, u, v],
                                });
                            }
                        }
                    }
                }
            } else {
                let l = ni + 1;
                let r = node.start_or_right;
                let el = self.nodes[l as usize].ray_entry(origin, &inv, best_t);
                let er = self.nodes[r as usize].ray_entry(origin, &inv, best_t);
                match (el, er) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            stack.push((r, b));
                            stack.push((l, a));
                        } else {
                            stack.push((l, a));
                            stack.push((r, b));
                        }
                    }
                    (Some(a), None) => stack.push((l, a)),
                    (None, Some(b)) => stack.push((r, b)),
                    (None, None) => {}
                }
            }
        }
        best
    }
}

struct BuildCtx<'a> {
    lo: &'a [Vec3],
    hi: &'a [Vec3],
    centroids: &'a [Vec3],
}

impl BuildCtx<'_> {
    fn bounds(&self, ids: &[u32]) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in ids {
            lo = lo.inf(&self.lo[i as usize]);
            hi = hi.sup(&self.hi[i as usize]);
        }
        (lo, hi)
    }

    fn build(&self, nodes: &mut Vec<Node>, order: &mut [u32], start: usize, end: usize) -> u32 {
        let ids = &mut order[start..end];
        let (lo, hi) = self.bounds(ids);
        let idx = nodes.len() as u32;
        nodes.push(Node {
            lo,
            hi,
            start_or_right: start as u32,
            count: (end - start) as u32,
        });
        if end - start <= LEAF_SIZE {
            return idx;
        }
        let mid = start + self.partition(ids);
        nodes[idx as usize].count = 0;
        self.build(nodes, order, start, mid);
        let right = self.build(nodes, order, mid, end);
        nodes[idx as usize].start_or_right = right;
        idx
    }

    /// Reorders `ids` and returns the split position (strictly inside).
    fn partition(&self, ids: &mut [u32]) -> usize {
        let n = ids.len();
        let mut clo = Vec3::repeat(f64::INFINITY);
        let mut chi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in ids.iter() {
            clo = clo.inf(&self.centroids[i as usize]);
            chi = chi.sup(&self.centroids[i as usize]);
        }
        let ext = chi - clo;
        let axis = ext.imax();
        if ext[axis] > 0.0 {
            if let Some(split) = self.sah_split(ids, axis, clo[axis], ext[axis]) {
                return split;
            }
        }
        // median fallback
        ids.sort_by(|&a, &b| {
            self.centroids[a as usize][axis]
                .total_cmp(&self.centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        n / 2
    }

    fn sah_split(&self, ids: &mut [u32], axis: usize, cmin: f64, cext: f64) -> Option<usize> {
        let bin_of = |i: u32| -> usize {
            let c = self.centroids[i as usize][axis];
            (((c - cmin) / cext * SAH_BINS as f64) as usize).min(SAH_BINS - 1)
        };
        let mut counts = [0usize; SAH_BINS];
        let mut blo = [Vec3::repeat(f64::INFINITY); SAH_BINS];
        let mut bhi = [Vec3::repeat(f64::NEG_INFINITY); SAH_BINS];
        for &i in ids.iter() {
            let b = bin_of(i);
            counts[b] += 1;
            blo[b] = blo[b].inf(&self.lo[i as usize]);
            bhi[b] = bhi[b].sup(&self.hi[i as usize]);
        }
        let area = |lo: &Vec3, hi: &Vec3| {
            let d = hi - lo;
            if d.x < 0.0 {
                0.0
            } else {
                d.x * d.y + d.y * d.z + d.z * d.x
            }
        };
        let mut left_area = [0.0; SAH_BINS];
        let mut left_count = [0usize; SAH_BINS];
        let (mut lo, mut hi, mut cnt) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY), 0);
        for b in 0..SAH_BINS {
            lo = lo.inf(&blo[b]);
            hi = hi.sup(&bhi[b]);
            cnt += counts[b];
            left_area[b] = area(&lo, &hi);
            left_count[b] = cnt;
        }
        let (mut lo, mut hi, mut cnt) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY), 0);
        let mut best: Option<(f64, usize)> = None;
        for b in (1..SAH_BINS).rev() {
            lo = lo.inf(&blo[b]);
            hi = hi.sup(&bhi[b]);
            cnt += counts[b];
            let lc = left_count[b - 1];
            if lc == 0 || cnt == 0 {
                continue;
            }
            let cost = left_area[b - 1] * lc as f64 + area(&lo, &hi) * cnt as f64;
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, b));
            }
        }
        let (_, split_bin) = best?;
        // stable partition keeps construction deterministic
        let (mut left, mut right): (Vec<u32>, Vec<u32>) =
            ids.iter().partition(|&&i| bin_of(i) < split_bin);
        let mid = left.len();
        left.append(&mut right);
        ids.copy_from_slice(&left);
        Some(mid)
    }
}
