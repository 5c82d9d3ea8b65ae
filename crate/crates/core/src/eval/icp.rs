//! Point-to-point ICP with closest-point correspondences.

use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KdTree, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once the RMS changes by less than this.
    pub tol: f64,
    /// Source points used for registration (evenly strided subset).
    pub max_points: usize,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 100,
            tol: 1e-6,
            max_points: 20000,
        }
    }
}

/// `x ↦ rotation · x + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    pub rms: f64,
    /// RMS before each update, then the final value.
    pub history: Vec<f64>,
}

fn check_spread(p: &[Vec3], what: &str) -> Result<()> {
    if p.len() < 3 {
        return Err(Error::Degenerate(format!("{what}: fewer than 3 points")));
    }
    let c = p.iter().sum::<Vec3>() / p.len() as f64;
    let cov: Matrix3<f64> = p.iter().map(|x| (x - c) * (x - c).transpose()).sum();
    let s = cov.symmetric_eigenvalues();
    let (lo, hi) = (s.min(), s.max());
    let mid = s.sum() - lo - hi;
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(Error::Degenerate(format!("{what}: points are collinear")));
    }
    Ok(())
}

/// Least-squares rotation + translation taking `src[i]` onto `dst[i]`.
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> RigidTransform {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let h: Matrix3<f64> = src.iter().zip(dst).map(|(s, d)| (s - cs) * (d - cd).transpose()).sum();
    let svd = SVD::new(h, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    }
}

/// Registers `source` onto `target`.
pub fn icp_align(source: &[Vec3], target: &[Vec3], cfg: &IcpConfig) -> Result<IcpResult> {
    check_spread(source, "icp source")?;
    check_spread(target, "icp target")?;
    let step = source.len().div_ceil(cfg.max_points.max(3));
    let src: Vec<Vec3> = source.iter().step_by(step.max(1)).copied().collect();
    let tree = KdTree::new(target);
    let mut t = RigidTransform::identity();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let moved: Vec<Vec3> = src.iter().map(|p| t.apply(p)).collect();
        let nn: Vec<(usize, f64)> = moved.par_iter().map(|p| tree.nearest(p)).collect();
        let rms = (nn.iter().map(|x| x.1).sum::<f64>() / nn.len() as f64).sqrt();
        let converged = history.last().is_some_and(|&prev: &f64| (prev - rms).abs() < cfg.tol);
        history.push(rms);
        if converged || iterations >= cfg.max_iters || rms == 0.0 {
            return Ok(IcpResult {
                transform: t,
                iterations,
                rms,
                history,
            });
        }
        let dst: Vec<Vec3> = nn.iter().map(|&(i, _)| target[i]).collect();
        t = kabsch(&moved, &dst).compose(&t);
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{sample_surface, shapes};
    use nalgebra::Rotation3;

    fn shape() -> Vec<Vec3> {
        let m = shapes::box_mesh(Vec3::new(-0.4, -0.2, -0.1), Vec3::new(0.4, 0.3, 0.15))
            .merged(&shapes::icosphere(0.15, 2).transformed(1.0, Vec3::new(0.3, 0.35, 0.0)));
        sample_surface(&m, 3000, 5).unwrap().points
    }

    #[test]
    fn identical_sets_give_identity() {
        let p = shape();
        let r = icp_align(&p, &p, &IcpConfig::default()).unwrap();
        assert!((r.transform.rotation - Matrix3::identity()).abs().max() < 1e-6);
        assert!(r.transform.translation.norm() < 1e-6 && r.rms < 1e-9);
    }

    #[test]
    fn recovers_rigid_perturbation_monotonically() {
        let p = shape();
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(0.3, 1.0, 0.2)), 10f64.to_radians());
        let t = RigidTransform {
            rotation: *rot.matrix(),
            translation: Vec3::new(0.05, 0.0, 0.0),
        };
        let moved: Vec<Vec3> = p.iter().map(|x| t.apply(x)).collect();
        let r = icp_align(&moved, &p, &IcpConfig::default()).unwrap();
        assert!(r.rms <= 1e-3, "{}", r.rms);
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", r.history);
        }
        let back = r.transform.compose(&t);
        assert!((back.rotation - Matrix3::identity()).abs().max() < 1e-3);
    }

    #[test]
    fn degenerate_inputs_error() {
        let line: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(icp_align(&line, &shape(), &IcpConfig::default()).is_err());
        assert!(icp_align(&line[..2], &shape(), &IcpConfig::default()).is_err());
    }

    #[test]
    fn kabsch_exact() {
        let p = shape();
        let rot = Rotation3::from_euler_angles(0.4, -0.2, 1.1);
        let t = RigidTransform {
            rotation: *rot.matrix(),
            translation: Vec3::new(0.3, -0.1, 2.0),
        };
        let q: Vec<Vec3> = p.iter().map(|x| t.apply(x)).collect();
        let k = kabsch(&p, &q);
        assert!((k.rotation - t.rotation).abs().max() < 1e-10);
        assert!((k.translation - t.translation).norm() < 1e-10);
    }
}
