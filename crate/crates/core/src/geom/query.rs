//! Exact per-triangle primitives shared by the BVH and the brute-force oracles.

use crate::geom::Vec3;

/// Which Voronoi feature of a triangle a closest point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Vertex(u8),
    /// Edge between local corners `a < b`.
    Edge(u8, u8),
    Face,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrianglePoint {
    pub point: Vec3,
    pub barycentric: [f64; 3],
    pub feature: Feature,
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> TrianglePoint {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    let (bary, feature) = 'region: {
        if d1 <= 0.0 && d2 <= 0.0 {
            break 'region ([1.0, 0.0, 0.0], Feature::Vertex(0));
        }
        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            break 'region ([0.0, 1.0, 0.0], Feature::Vertex(1));
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            let v = d1 / (d1 - d3);
            break 'region ([1.0 - v, v, 0.0], Feature::Edge(0, 1));
        }
        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            break 'region ([0.0, 0.0, 1.0], Feature::Vertex(2));
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            let w = d2 / (d2 - d6);
            break 'region ([1.0 - w, 0.0, w], Feature::Edge(0, 2));
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            break 'region ([0.0, 1.0 - w, w], Feature::Edge(1, 2));
        }
        let denom = 1.0 / (va + vb + vc);
        let v = vb * denom;
        let w = vc * denom;
        ([1.0 - v - w, v, w], Feature::Face)
    };
    let point = a * bary[0] + b * bary[1] + c * bary[2];
    TrianglePoint {
        point,
        barycentric: bary,
        feature,
    }
}

/// Squared distance from `p` to the closest point on triangle `abc`.
pub fn point_triangle_distance_sq(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (f64, TrianglePoint) {
    let tp = closest_point_on_triangle(p, a, b, c);
    ((p - tp.point).norm_squared(), tp)
}

/// Möller–Trumbore ray/triangle intersection, double-sided.
/// Returns `(t, u, v)` with barycentric `(1-u-v, u, v)`.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(&qvec) * inv, u, v))
}

/// Signed solid angle subtended by triangle `abc` at `p` (Van Oosterom–Strackee).
pub fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (ra, rb, rc) = (a - p, b - p, c - p);
    let (la, lb, lc) = (ra.norm(), rb.norm(), rc.norm());
    let num = ra.dot(&rb.cross(&rc));
    let den = la * lb * lc + ra.dot(&rb) * lc + rb.dot(&rc) * la + rc.dot(&ra) * lb;
    2.0 * num.atan2(den)
}
