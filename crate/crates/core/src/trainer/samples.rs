//! Query-point sampling around a scan and the `SMP1` sample file.
//!
//! File layout (little-endian): `b"SMP1"`, `u32` scan id, `u64` count, then
//! `count` records of ten `f32`: `x y z  d  r g b  nx ny nz`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{sample_surface, Bvh, TriangleMesh, Vec3};

const MAGIC: &[u8; 4] = b"SMP1";
const RECORD: usize = 40;

/// Ground truth for one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub x: Vec3,
    /// Signed distance to the scan (negative inside).
    pub d: f64,
    /// Scan color at the closest surface point.
    pub r: Vec3,
    /// Unit outward normal: direction of the distance gradient.
    pub n: Vec3,
    pub scan: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub count: usize,
    /// Std-dev of the isotropic Gaussian offset from the surface.
    pub shell_sigma: f64,
    /// Fraction of near-surface samples; the rest are uniform in the cube.
    pub surface_fraction: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            count: 40_960,
            shell_sigma: 0.05,
            surface_fraction: 0.9,
        }
    }
}

/// Below this |d| the normal comes from the closest feature's pseudonormal.
const NORMAL_SWITCH: f64 = 1e-4;

/// Ground truth at an arbitrary point; the scan must carry vertex colors.
pub fn ground_truth(scan: &TriangleMesh, bvh: &Bvh, x: Vec3, id: u32) -> TrainingSample {
    let (d, cp) = bvh.signed_closest(&x);
    let f = scan.faces()[cp.face];
    let colors = scan.colors().expect("scan colors");
    let mut r = Vec3::zeros();
    for k in 0..3 {
        r += colors[f[k] as usize] * cp.barycentric[k];
    }
    let n = if d.abs() > NORMAL_SWITCH {
        (x - cp.point) / d
    } else {
        bvh.pseudonormal(&cp)
    };
    TrainingSample {
        x,
        d,
        r: r.map(|c| c.clamp(0.0, 1.0)),
        n: n.normalize(),
        scan: id,
    }
}

/// Mixture sampling: Gaussian-perturbed surface points plus uniform points in
/// `[-1,1]³`, all clamped to the cube; deterministic in `seed`.
pub fn generate_samples(scan: &TriangleMesh, id: u32, cfg: &SamplingConfig, seed: u64) -> Result<Vec<TrainingSample>> {
    if scan.colors().is_none() {
        return Err(Error::MissingAttribute("color"));
    }
    if !(cfg.shell_sigma > 0.0) || !(0.0..=1.0).contains(&cfg.surface_fraction) {
        return Err(Error::Config("shell_sigma must be > 0 and surface_fraction in [0, 1]".into()));
    }
    let bvh = Bvh::build(scan)?;
    let n_surf = (cfg.count as f64 * cfg.surface_fraction).round() as usize;
    let mut points = Vec::with_capacity(cfg.count);
    if n_surf > 0 {
        let surf = sample_surface(scan, n_surf, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_454c_4c00_0000);
        let g = Normal::new(0.0, cfg.shell_sigma).expect("sigma > 0");
        for p in surf.points {
            let off = Vec3::new(g.sample(&mut rng), g.sample(&mut rng), g.sample(&mut rng));
            points.push((p + off).map(|c| c.clamp(-1.0, 1.0)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x554e_4946_0000_0000);
    while points.len() < cfg.count {
        points.push(Vec3::from_fn(|_, _| rng.random_range(-1.0..=1.0)));
    }
    Ok(points.into_par_iter().map(|x| ground_truth(scan, &bvh, x, id)).collect())
}

pub fn samples_to_bytes(samples: &[TrainingSample], scan: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + samples.len() * RECORD);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&scan.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        let vals = [s.x.x, s.x.y, s.x.z, s.d, s.r.x, s.r.y, s.r.z, s.n.x, s.n.y, s.n.z];
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn samples_from_bytes(bytes: &[u8]) -> Result<Vec<TrainingSample>> {
    let bad = |m: &str| Error::Format(format!("sample file: {m}"));
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let scan = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != count * RECORD {
        return Err(bad(&format!("{count} records declared, {} bytes present", body.len())));
    }
    Ok(body
        .chunks_exact(RECORD)
        .map(|r| {
            let f = |i: usize| f32::from_le_bytes(r[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
            TrainingSample {
                x: Vec3::new(f(0), f(1), f(2)),
                d: f(3),
                r: Vec3::new(f(4), f(5), f(6)),
                n: Vec3::new(f(7), f(8), f(9)),
                scan,
            }
        })
        .collect())
}

pub fn save_samples(samples: &[TrainingSample], scan: u32, path: &Path) -> Result<()> {
    fs::write(path, samples_to_bytes(samples, scan)).map_err(|e| Error::io(path, e))
}

pub fn load_samples(path: &Path) -> Result<Vec<TrainingSample>> {
    samples_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
