//! Losses on decoder outputs, each returning its gradient w.r.t. the outputs.
//!
//! All reductions are means (over samples, and over channels for colors).

use crate::geom::Vec3;
use crate::net::real::sign;
use crate::net::Real;

/// Stencil size per sample for the geometry loss: center, then ±h on x, y, z.
pub const STENCIL: usize = 7;

/// The seven points whose predicted SDF values the geometry loss consumes.
pub fn stencil_points(x: &Vec3, h: f64) -> [Vec3; STENCIL] {
    let e = |i: usize, s: f64| {
        let mut p = *x;
        p[i] += s * h;
        p
    };
    [*x, e(0, 1.0), e(0, -1.0), e(1, 1.0), e(1, -1.0), e(2, 1.0), e(2, -1.0)]
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeometryLossParams {
    pub lambda_n: f64,
    pub fd_step: f64,
    /// Normalize the finite-difference gradient before the dot product.
    pub normalize: bool,
}

impl Default for GeometryLossParams {
    fn default() -> Self {
        GeometryLossParams {
            lambda_n: 0.1,
            fd_step: 0.005,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    pub total: T,
    /// Geometry: `[sdf L1, normal term]`; color: `[L1]`.
    pub parts: Vec<T>,
    /// d total / d prediction, same layout as the prediction.
    pub grad: Vec<T>,
}

/// `mean |s − d| + λ·mean(1 − n·ĝ)` where `ĝ` is the central-difference
/// gradient of the predicted field (normalized unless disabled).
///
/// `pred` holds [`STENCIL`] values per sample in [`stencil_points`] order.
pub fn geometry_loss<T: Real>(pred: &[T], d: &[f64], n: &[Vec3], p: &GeometryLossParams) -> LossValue<T> {
    let b = d.len();
    assert_eq!(pred.len(), b * STENCIL, "stencil predictions");
    assert_eq!(n.len(), b);
    let inv_b = T::c(1.0 / b as f64);
    let lambda = T::c(p.lambda_n);
    let inv_2h = T::c(0.5 / p.fd_step);
    let mut grad = vec![T::zero(); pred.len()];
    let (mut l1, mut nt) = (T::zero(), T::zero());
    for i in 0..b {
        let s = &pred[i * STENCIL..(i + 1) * STENCIL];
        let gi = &mut grad[i * STENCIL..(i + 1) * STENCIL];
        let r = s[0] - T::c(d[i]);
        l1 += r.abs();
        gi[0] = sign(r) * inv_b;

        let g = [(s[1] - s[2]) * inv_2h, (s[3] - s[4]) * inv_2h, (s[5] - s[6]) * inv_2h];
        let nn = [T::c(n[i].x), T::c(n[i].y), T::c(n[i].z)];
        // d term / d g
        let dg: [T; 3] = if p.normalize {
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + T::c(1e-20)).sqrt();
            let gh = [g[0] / norm, g[1] / norm, g[2] / norm];
            let dot = nn[0] * gh[0] + nn[1] * gh[1] + nn[2] * gh[2];
            nt += T::one() - dot;
            [0, 1, 2].map(|k| -(nn[k] - gh[k] * dot) / norm)
        } else {
            nt += T::one() - (nn[0] * g[0] + nn[1] * g[1] + nn[2] * g[2]);
            [-nn[0], -nn[1], -nn[2]]
        };
        for k in 0..3 {
            let v = lambda * dg[k] * inv_2h * inv_b;
            gi[1 + 2 * k] = v;
            gi[2 + 2 * k] = -v;
        }
    }
    let (l1, nt) = (l1 * inv_b, nt * inv_b);
    LossValue {
        total: l1 + lambda * nt,
        parts: vec![l1, nt],
        grad,
    }
}

/// Mean absolute RGB error over channels and samples.
pub fn color_loss<T: Real>(pred: &[T], gt: &[Vec3]) -> LossValue<T> {
    assert_eq!(pred.len(), gt.len() * 3);
    let scale = T::c(1.0 / pred.len().max(1) as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (p, g) in pred.chunks(3).zip(gt) {
        for k in 0..3 {
            let r = p[k] - T::c(g[k]);
            total += r.abs();
            grad.push(sign(r) * scale);
        }
    }
    let total = total * scale;
    LossValue {
        total,
        parts: vec![total],
        grad,
    }
}

/// Mean absolute error over the selected pixels' 3 components.
pub fn masked_l1<T: Real>(pred: &[T], target: &[T], mask: &[bool]) -> LossValue<T> {
    let count = mask.iter().filter(|&&m| m).count().max(1) * 3;
    let scale = T::c(1.0 / count as f64);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); pred.len()];
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        for k in i * 3..i * 3 + 3 {
            let r = pred[k] - target[k];
            total += r.abs();
            grad[k] = sign(r) * scale;
        }
    }
    let total = total * scale;
    LossValue {
        total,
        parts: vec![total],
        grad,
    }
}
