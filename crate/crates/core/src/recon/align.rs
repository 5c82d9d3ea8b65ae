//! Fitting the body mesh's scale and offset to a silhouette and 2D joints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::neldermead::minimize;
use crate::error::{Error, Result};
use crate::geom::{TriangleMesh, Vec3};
use crate::raster::{render_mask, MultiChannelImage, OrthoCamera};

/// A named body joint, located at a body-mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRef {
    pub name: String,
    pub vertex: usize,
}

/// A detected 2D joint in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint2d {
    pub name: String,
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

/// Projects the joint vertices of `body` into `camera` (confidence 1).
pub fn project_joints(body: &TriangleMesh, joints: &[JointRef], camera: &OrthoCamera) -> Vec<Joint2d> {
    joints
        .iter()
        .map(|j| {
            let (u, v, _) = camera.project(&body.vertices()[j.vertex]);
            Joint2d {
                name: j.name.clone(),
                u,
                v,
                confidence: 1.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub silhouette_weight: f64,
    /// Weight per pixel of mean joint error.
    pub joint_weight: f64,
    pub iterations: usize,
    /// Extra jittered restarts after the initial run.
    pub restarts: usize,
    /// Silhouettes are compared at this square resolution.
    pub silhouette_size: usize,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            silhouette_weight: 1.0,
            joint_weight: 0.01,
            iterations: 200,
            restarts: 3,
            silhouette_size: 256,
            seed: 0,
        }
    }
}

/// `aligned = scale · body + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub scale: f64,
    pub offset: [f64; 3],
    pub iou: f64,
    /// Mean confidence-weighted joint error in input pixels.
    pub joint_error: f64,
    pub objective: f64,
}

impl AlignmentResult {
    pub fn identity() -> Self {
        AlignmentResult {
            scale: 1.0,
            offset: [0.0; 3],
            iou: f64::NAN,
            joint_error: f64::NAN,
            objective: f64::NAN,
        }
    }

    pub fn apply(&self, body: &TriangleMesh) -> TriangleMesh {
        body.transformed(self.scale, Vec3::from(self.offset))
    }
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut uni) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        uni += (x || y) as usize;
    }
    if uni == 0 {
        1.0
    } else {
        inter as f64 / uni as f64
    }
}

struct Problem<'a> {
    body: &'a TriangleMesh,
    camera: &'a OrthoCamera,
    small_cam: OrthoCamera,
    target: Vec<bool>,
    /// (body vertex, pixel u, pixel v, confidence)
    joints: Vec<(Vec3, f64, f64, f64)>,
    cfg: &'a AlignConfig,
}

impl Problem<'_> {
    /// Parameters: `[scale, offset·right, offset·up]`; the depth offset is
    /// unobservable under orthographic projection and stays 0.
    fn transform(&self, p: &[f64]) -> (f64, Vec3) {
        (p[0], self.camera.right() * p[1] + self.camera.up() * p[2])
    }

    fn terms(&self, p: &[f64]) -> (f64, f64) {
        let (s, o) = self.transform(p);
        let iou = if self.cfg.silhouette_weight > 0.0 {
            iou(&render_mask(&self.small_cam, &self.body.transformed(s, o)), &self.target)
        } else {
            f64::NAN
        };
        let (mut err, mut wsum) = (0.0, 0.0);
        for &(x, u, v, c) in &self.joints {
            let (pu, pv, _) = self.camera.project(&(x * s + o));
            err += c * ((pu - u).powi(2) + (pv - v).powi(2)).sqrt();
            wsum += c;
        }
        (iou, if wsum > 0.0 { err / wsum } else { 0.0 })
    }

    fn objective(&self, p: &[f64]) -> f64 {
        if !(p[0] > 1e-3) {
            return f64::INFINITY;
        }
        let (iou, je) = self.terms(p);
        let sil = if self.cfg.silhouette_weight > 0.0 {
            self.cfg.silhouette_weight * (1.0 - iou)
        } else {
            0.0
        };
        sil + self.cfg.joint_weight * je
    }

    /// Closed-form least-squares similarity (scale + image-plane shift) from
    /// the joints, or identity when there are too few.
    fn joint_init(&self) -> Vec<f64> {
        let pts: Vec<(f64, f64, f64, f64, f64)> = self
            .joints
            .iter()
            .map(|&(x, u, v, c)| {
                let q = (x.dot(&self.camera.right()), x.dot(&self.camera.up()));
                let t = self.camera.unproject(u, v, 0.0);
                (q.0, q.1, t.dot(&self.camera.right()), t.dot(&self.camera.up()), c)
            })
            .collect();
        let w: f64 = pts.iter().map(|p| p.4).sum();
        if pts.len() < 2 || w <= 0.0 {
            return vec![1.0, 0.0, 0.0];
        }
        let mean = |f: &dyn Fn(&(f64, f64, f64, f64, f64)) -> f64| pts.iter().map(|p| p.4 * f(p)).sum::<f64>() / w;
        let (qx, qy, tx, ty) = (mean(&|p| p.0), mean(&|p| p.1), mean(&|p| p.2), mean(&|p| p.3));
        let (mut num, mut den) = (0.0, 0.0);
        for p in &pts {
            let (dqx, dqy) = (p.0 - qx, p.1 - qy);
            num += p.4 * (dqx * (p.2 - tx) + dqy * (p.3 - ty));
            den += p.4 * (dqx * dqx + dqy * dqy);
        }
        if den <= 1e-12 || num <= 0.0 {
            return vec![1.0, tx - qx, ty - qy];
        }
        let s = num / den;
        vec![s, tx - s * qx, ty - s * qy]
    }
}

/// Fits `(scale, offset)` so the body's silhouette and joints match the mask
/// and detected 2D joints. Joints are matched to `regressor` entries by name.
pub fn align_body(
    body: &TriangleMesh,
    mask: &MultiChannelImage,
    joints2d: &[Joint2d],
    camera: &OrthoCamera,
    regressor: &[JointRef],
    cfg: &AlignConfig,
) -> Result<AlignmentResult> {
    let alpha = mask.require("alpha")?;
    if (mask.width(), mask.height()) != (camera.width(), camera.height()) {
        return Err(Error::ShapeMismatch("mask size differs from camera".into()));
    }
    if !alpha.iter().any(|&a| a > 0.5) {
        return Err(Error::Degenerate("mask has zero area".into()));
    }
    let mut joints = Vec::new();
    for j in joints2d.iter().filter(|j| j.confidence > 0.0) {
        if let Some(r) = regressor.iter().find(|r| r.name == j.name) {
            let x = *body
                .vertices()
                .get(r.vertex)
                .ok_or_else(|| Error::InvalidMesh(format!("joint {} vertex out of range", r.name)))?;
            joints.push((x, j.u, j.v, j.confidence));
        }
    }
    if cfg.joint_weight > 0.0 && joints.len() < 4 {
        return Err(Error::Degenerate(format!("{} usable joints, need at least 4", joints.len())));
    }
    let size = cfg.silhouette_size.max(8);
    let small = mask.select(&["alpha"]).resize_nearest(size, size);
    let problem = Problem {
        body,
        camera,
        small_cam: camera.resized(size, size)?,
        target: small.require("alpha")?.iter().map(|&a| a > 0.5).collect(),
        joints,
        cfg,
    };

    let f = |p: &[f64]| problem.objective(p);
    let init = problem.joint_init();
    let mut best = minimize(f, &init, &[0.05, 0.05, 0.05], cfg.iterations, 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        let start: Vec<f64> = vec![
            best.x[0] * (1.0 + rng.random_range(-0.05..0.05)),
            best.x[1] + rng.random_range(-0.02..0.02),
            best.x[2] + rng.random_range(-0.02..0.02),
        ];
        let m = minimize(f, &start, &[0.02, 0.02, 0.02], cfg.iterations, 1e-10);
        if m.value < best.value {
            best = m;
        }
    }
    let (s, o) = problem.transform(&best.x);
    let (iou, je) = problem.terms(&best.x);
    Ok(AlignmentResult {
        scale: s,
        offset: o.into(),
        iou,
        joint_error: je,
        objective: best.value,
    })
}
