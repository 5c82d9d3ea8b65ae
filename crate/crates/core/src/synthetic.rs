//! A procedural clothed humanoid for tests and demos: a smooth union of
//! capsules with painted clothing, plus a thinner "naked" body with UVs and
//! joint vertices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::io::save_mesh;
use crate::geom::shapes::spherical_uvs;
use crate::geom::{TriangleMesh, Vec3};
use crate::recon::{marching_cubes, JointRef, VoxelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Marching-cubes resolution of the clothed scan.
    pub resolution: usize,
    pub body_resolution: usize,
    /// Arm raise in degrees; varies the pose between instances.
    pub arm_angle: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            resolution: 128,
            body_resolution: 64,
            arm_angle: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Part {
    Skin,
    Shirt,
    Pants,
    Shoe,
}

struct Capsule {
    a: Vec3,
    b: Vec3,
    r: f64,
    /// Extra thickness of the clothed scan over the body.
    cloth: f64,
    part: Part,
}

impl Capsule {
    fn sdf(&self, x: &Vec3, inflate: f64) -> f64 {
        let ab = self.b - self.a;
        let t = ((x - self.a).dot(&ab) / ab.norm_squared().max(1e-12)).clamp(0.0, 1.0);
        (x - (self.a + ab * t)).norm() - self.r - inflate
    }
}

const SMOOTH: f64 = 0.03;

fn smin(a: f64, b: f64) -> f64 {
    let h = (0.5 + 0.5 * (b - a) / SMOOTH).clamp(0.0, 1.0);
    b + (a - b) * h - SMOOTH * h * (1.0 - h)
}

struct Figure {
    parts: Vec<Capsule>,
    joints: Vec<(&'static str, Vec3)>,
}

fn figure(arm_angle: f64) -> Figure {
    let v = Vec3::new;
    let mut joints = vec![
        ("head", v(0.0, 0.62, 0.02)),
        ("neck", v(0.0, 0.45, 0.0)),
        ("pelvis", v(0.0, -0.08, 0.0)),
    ];
    let mut parts = vec![
        Capsule { a: v(0.0, -0.02, 0.0), b: v(0.0, 0.3, -0.01), r: 0.16, cloth: 0.03, part: Part::Shirt },
        Capsule { a: v(0.0, 0.04, 0.07), b: v(0.0, 0.12, 0.08), r: 0.11, cloth: 0.025, part: Part::Shirt },
        Capsule { a: v(-0.1, -0.08, 0.0), b: v(0.1, -0.08, 0.0), r: 0.13, cloth: 0.02, part: Part::Pants },
        Capsule { a: v(0.0, 0.4, 0.0), b: v(0.0, 0.5, 0.01), r: 0.055, cloth: 0.0, part: Part::Skin },
        Capsule { a: v(0.0, 0.6, 0.02), b: v(0.0, 0.66, 0.02), r: 0.11, cloth: 0.01, part: Part::Skin },
    ];
    let (s, c) = arm_angle.to_radians().sin_cos();
    for side in [-1.0, 1.0] {
        let sh = v(side * 0.2, 0.35, 0.0);
        // arm hangs at `arm_angle` from vertical, forearm bent forward
        let el = sh + v(side * 0.27 * s, -0.27 * c, 0.05);
        let wr = el + v(side * 0.06, -0.22, 0.12);
        let hip = v(side * 0.09, -0.12, 0.0);
        let kn = v(side * 0.11, -0.45, 0.04);
        let an = v(side * 0.12, -0.78, 0.0);
        let toe = an + v(0.0, -0.03, 0.11);
        parts.extend([
            Capsule { a: sh, b: el, r: 0.055, cloth: 0.02, part: Part::Shirt },
            Capsule { a: el, b: wr, r: 0.045, cloth: 0.0, part: Part::Skin },
            Capsule { a: hip, b: kn, r: 0.085, cloth: 0.025, part: Part::Pants },
            Capsule { a: kn, b: an, r: 0.06, cloth: 0.02, part: Part::Pants },
            Capsule { a: an, b: toe, r: 0.045, cloth: 0.015, part: Part::Shoe },
        ]);
        let name = |l: &'static str, r: &'static str| if side < 0.0 { r } else { l };
        joints.extend([
            (name("left_shoulder", "right_shoulder"), sh),
            (name("left_elbow", "right_elbow"), el),
            (name("left_wrist", "right_wrist"), wr),
            (name("left_hip", "right_hip"), hip),
            (name("left_knee", "right_knee"), kn),
            (name("left_ankle", "right_ankle"), an),
        ]);
    }
    Figure { parts, joints }
}

impl Figure {
    fn sdf(&self, x: &Vec3, clothed: bool) -> (f64, Part) {
        let mut d = f64::INFINITY;
        let mut best = (f64::INFINITY, Part::Skin);
        for c in &self.parts {
            let s = c.sdf(x, if clothed { c.cloth } else { 0.0 });
            d = smin(d.min(1e3), s);
            if s < best.0 {
                best = (s, c.part);
            }
        }
        (d, best.1)
    }

    fn color(&self, x: &Vec3) -> [f64; 3] {
        match self.sdf(x, true).1 {
            Part::Skin => [0.86, 0.66, 0.52],
            Part::Shirt => {
                if (x.y * 40.0).sin() > 0.3 {
                    [0.95, 0.9, 0.25]
                } else {
                    [0.8, 0.15, 0.15]
                }
            }
            Part::Pants => [0.15, 0.25, 0.6],
            Part::Shoe => [0.12, 0.1, 0.08],
        }
    }
}

/// Clothed colored scan, body with UVs, and named joint vertices on the body.
#[derive(Debug, Clone)]
pub struct SyntheticHuman {
    pub scan: TriangleMesh,
    pub body: TriangleMesh,
    pub joints: Vec<JointRef>,
}

pub fn synthetic_human(cfg: &SyntheticConfig) -> Result<SyntheticHuman> {
    let fig = figure(cfg.arm_angle);
    let grid = VoxelGrid::from_fn(cfg.resolution, |x| (fig.sdf(x, true).0, fig.color(x)))?;
    let scan = marching_cubes(&grid, 0.0)?;
    let bgrid = VoxelGrid::from_fn(cfg.body_resolution, |x| (fig.sdf(x, false).0, [0.0; 3]))?;
    let raw = marching_cubes(&bgrid, 0.0)?;
    if scan.is_empty() || raw.is_empty() {
        return Err(Error::Degenerate("synthetic figure fell outside the grid".into()));
    }
    // plain geometry + UVs for the body
    let body = TriangleMesh::new(raw.vertices().to_vec(), raw.faces().to_vec())?;
    let uv = spherical_uvs(&body);
    let body = body.with_uvs(uv)?;
    let joints = fig
        .joints
        .iter()
        .map(|(name, p)| {
            let vertex = body
                .vertices()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()))
                .map(|(i, _)| i)
                .expect("non-empty body");
            JointRef {
                name: name.to_string(),
                vertex,
            }
        })
        .collect();
    Ok(SyntheticHuman { scan, body, joints })
}

/// Writes `scans/<name>.ply`, `bodies/<name>.ply` and
/// `bodies/<name>.joints.json` under `root`.
pub fn write_synthetic(human: &SyntheticHuman, root: &Path, name: &str) -> Result<()> {
    save_mesh(&human.scan, &root.join("scans").join(format!("{name}.ply")))?;
    save_mesh(&human.body, &root.join("bodies").join(format!("{name}.ply")))?;
    let jp = root.join("bodies").join(format!("{name}.joints.json"));
    fs::write(&jp, serde_json::to_vec_pretty(&human.joints)?).map_err(|e| Error::io(&jp, e))
}
