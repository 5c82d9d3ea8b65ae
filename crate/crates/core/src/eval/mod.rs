//! Benchmark protocol: ICP registration, Chamfer distance, normal
//! consistency, f-score and SSIM.

pub mod icp;
pub mod points;
pub mod ssim;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use icp::{icp_align, kabsch, IcpConfig, IcpResult, RigidTransform};
pub use points::{chamfer, fscore, fscore_from_distances, nearest_distances};
pub use ssim::ssim;

use crate::error::{Error, Result};
use crate::geom::{load_mesh, sample_surface, Bvh, KdTree, SurfaceSamples, TriangleMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Surface samples per mesh.
    pub samples: usize,
    /// f-score threshold in centimetres.
    pub tau_cm: f64,
    pub cm_per_unit: f64,
    pub seed: u64,
    /// Register the prediction onto the ground truth first.
    pub icp: bool,
    pub icp_config: IcpConfig,
    /// Report mean squared instead of mean distances (cm²).
    pub squared: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 100_000,
            tau_cm: 1.0,
            cm_per_unit: 100.0,
            seed: 0,
            icp: true,
            icp_config: IcpConfig::default(),
            squared: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpSummary {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub iterations: usize,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Prediction → ground-truth surface, cm (cm² when `squared`).
    pub cd_p2s: f64,
    /// Ground truth → predicted surface.
    pub cd_s2p: f64,
    pub nc: f64,
    pub fscore: f64,
    pub icp: IcpSummary,
    pub points: usize,
    pub threshold_cm: f64,
    pub cm_per_unit: f64,
    pub squared: bool,
    pub seed: u64,
}

/// Distances (units) from every sample to the surface in `to`.
fn surface_distances(from: &SurfaceSamples, to: &Bvh) -> Vec<f64> {
    from.points.par_iter().map(|p| to.closest_point(p).distance).collect()
}

/// Cosine between each sample normal of `from` and the normal of its nearest
/// sample in `to`.
fn normal_cosines(from: &SurfaceSamples, to: &SurfaceSamples, tree: &KdTree) -> Vec<f64> {
    from.points
        .par_iter()
        .zip(&from.normals)
        .map(|(p, n)| n.dot(&to.normals[tree.nearest(p).0]))
        .collect()
}

fn symmetric_nc(a: &SurfaceSamples, b: &SurfaceSamples) -> f64 {
    let (ta, tb) = (KdTree::new(&a.points), KdTree::new(&b.points));
    0.5 * (mean(&normal_cosines(a, b, &tb)) + mean(&normal_cosines(b, a, &ta)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Registers `pred` onto `gt` and scores it. Both meshes are sampled with the
/// same seed, so identical inputs score exactly zero distance.
pub fn evaluate_mesh(pred: &TriangleMesh, gt: &TriangleMesh, cfg: &EvalConfig) -> Result<MetricsReport> {
    if !(cfg.tau_cm > 0.0 && cfg.cm_per_unit > 0.0) {
        return Err(Error::Config("tau_cm and cm_per_unit must be > 0".into()));
    }
    let gs = sample_surface(gt, cfg.samples, cfg.seed)?;
    let ps0 = sample_surface(pred, cfg.samples, cfg.seed)?;
    let reg = if cfg.icp {
        icp_align(&ps0.points, &gs.points, &cfg.icp_config)?
    } else {
        IcpResult {
            transform: RigidTransform::identity(),
            iterations: 0,
            rms: f64::NAN,
            history: vec![],
        }
    };
    let t = &reg.transform;
    let pred = pred.rigid_transformed(&t.rotation, t.translation);
    let mut ps = ps0;
    ps.points.iter_mut().for_each(|p| *p = t.apply(p));
    ps.normals.iter_mut().for_each(|n| *n = t.rotation * *n);

    let (gb, pb) = (Bvh::build(gt)?, Bvh::build(&pred)?);
    let d_pg = surface_distances(&ps, &gb);
    let d_gp = surface_distances(&gs, &pb);
    let s = cfg.cm_per_unit;
    let cd = |d: &[f64]| {
        if cfg.squared {
            mean(&d.iter().map(|x| (x * s).powi(2)).collect::<Vec<_>>())
        } else {
            s * mean(d)
        }
    };
    let r = t.rotation;
    Ok(MetricsReport {
        cd_p2s: cd(&d_pg),
        cd_s2p: cd(&d_gp),
        nc: symmetric_nc(&ps, &gs),
        fscore: fscore_from_distances(&d_pg, &d_gp, cfg.tau_cm / s),
        icp: IcpSummary {
            rotation: [[r[(0, 0)], r[(0, 1)], r[(0, 2)]], [r[(1, 0)], r[(1, 1)], r[(1, 2)]], [r[(2, 0)], r[(2, 1)], r[(2, 2)]]],
            translation: t.translation.into(),
            iterations: reg.iterations,
            rms: reg.rms * s,
        },
        points: cfg.samples,
        threshold_cm: cfg.tau_cm,
        cm_per_unit: s,
        squared: cfg.squared,
        seed: cfg.seed,
    })
}

/// Normal consistency alone: symmetrized mean cosine between each sampled
/// normal and that of its nearest sample on the other mesh.
pub fn normal_consistency(pred: &TriangleMesh, gt: &TriangleMesh, n: usize, seed: u64) -> Result<f64> {
    Ok(symmetric_nc(&sample_surface(pred, n, seed)?, &sample_surface(gt, n, seed)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub tool: String,
    pub version: String,
    pub pred: InputHash,
    pub gt: InputHash,
    pub config: EvalConfig,
    pub metrics: MetricsReport,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn evaluate_files(pred: &Path, gt: &Path, cfg: &EvalConfig) -> Result<MetricsDocument> {
    let metrics = evaluate_mesh(&load_mesh(pred)?, &load_mesh(gt)?, cfg)?;
    Ok(MetricsDocument {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        pred: InputHash {
            path: pred.to_path_buf(),
            sha256: sha256_file(pred)?,
        },
        gt: InputHash {
            path: gt.to_path_buf(),
            sha256: sha256_file(gt)?,
        },
        config: cfg.clone(),
        metrics,
    })
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestRow {
    pred_path: PathBuf,
    gt_path: PathBuf,
}

/// One manifest row's outcome; failures do not stop the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub pred_path: PathBuf,
    pub gt_path: PathBuf,
    pub result: Option<MetricsDocument>,
    pub error: Option<String>,
}

/// Evaluates every `(pred_path, gt_path)` row of a CSV manifest. Relative
/// paths resolve against the manifest's directory.
pub fn evaluate_batch(manifest: &Path, cfg: &EvalConfig) -> Result<Vec<BatchEntry>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(manifest).map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
    let rows: Vec<ManifestRow> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
    Ok(rows
        .into_iter()
        .map(|r| {
            let (p, g) = (base.join(&r.pred_path), base.join(&r.gt_path));
            let (result, error) = match evaluate_files(&p, &g, cfg) {
                Ok(d) => (Some(d), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BatchEntry {
                pred_path: r.pred_path,
                gt_path: r.gt_path,
                result,
                error,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{shapes, Vec3};
    use nalgebra::Rotation3;

    fn cfg() -> EvalConfig {
        EvalConfig {
            samples: 4000,
            seed: 3,
            ..EvalConfig::default()
        }
    }

    fn figure() -> TriangleMesh {
        shapes::box_mesh(Vec3::new(-0.3, -0.5, -0.15), Vec3::new(0.3, 0.2, 0.15))
            .merged(&shapes::icosphere(0.18, 3).transformed(1.0, Vec3::new(0.0, 0.4, 0.05)))
    }

    #[test]
    fn self_comparison_is_perfect() {
        let g = figure();
        let r = evaluate_mesh(&g, &g, &cfg()).unwrap();
        assert!(r.cd_p2s < 1e-9 && r.cd_s2p < 1e-9, "{r:?}");
        assert!((r.nc - 1.0).abs() < 1e-6 && r.fscore == 1.0);
    }

    #[test]
    fn flipped_normals_give_minus_one() {
        let g = shapes::icosphere(0.5, 3);
        let nc = normal_consistency(&g.flipped(), &g, 3000, 1).unwrap();
        assert!((nc + 1.0).abs() < 1e-6, "{nc}");
    }

    #[test]
    fn concentric_spheres_nearly_parallel() {
        let (a, b) = (shapes::icosphere(0.5, 4), shapes::icosphere(0.55, 4));
        assert!(normal_consistency(&a, &b, 5000, 2).unwrap() >= 0.99);
    }

    #[test]
    fn rigid_perturbation_is_undone() {
        let g = figure();
        let rot = Rotation3::from_axis_angle(&Vec3::y_axis(), 10f64.to_radians());
        let p = g.rigid_transformed(rot.matrix(), Vec3::new(0.05, 0.0, 0.0));
        let r = evaluate_mesh(&p, &g, &cfg()).unwrap();
        assert!(r.cd_p2s < 1e-3 && r.cd_s2p < 1e-3, "{r:?}");
        assert!((r.nc - 1.0).abs() < 1e-6);
    }

    #[test]
    fn common_rigid_motion_invariance() {
        let g = figure();
        let p = figure().transformed(1.07, Vec3::new(0.013, -0.031, 0.007));
        let a = evaluate_mesh(&p, &g, &cfg()).unwrap();
        let rot = Rotation3::from_euler_angles(0.3, 0.7, -0.2);
        let t = Vec3::new(0.2, -0.4, 1.0);
        let b = evaluate_mesh(&p.rigid_transformed(rot.matrix(), t), &g.rigid_transformed(rot.matrix(), t), &cfg()).unwrap();
        for (x, y) in [(a.cd_p2s, b.cd_p2s), (a.cd_s2p, b.cd_s2p), (a.nc, b.nc), (a.fscore, b.fscore)] {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn report_round_trip_and_batch() {
        let dir = tempfile::tempdir().unwrap();
        let g = figure();
        crate::geom::save_mesh(&g, &dir.path().join("gt.ply")).unwrap();
        crate::geom::save_mesh(&g.transformed(1.02, Vec3::zeros()), &dir.path().join("pred.ply")).unwrap();
        fs::write(
            dir.path().join("manifest.csv"),
            "pred_path,gt_path\npred.ply,gt.ply\nmissing.ply,gt.ply\n",
        )
        .unwrap();
        let c = EvalConfig { samples: 1000, ..cfg() };
        let rows = evaluate_batch(&dir.path().join("manifest.csv"), &c).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].error.is_some() && rows[1].result.is_none());
        let doc = rows[0].result.clone().unwrap();
        assert_eq!(doc.gt.sha256.len(), 64);
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(serde_json::from_str::<MetricsDocument>(&text).unwrap(), doc);
        // deterministic given the seed
        assert_eq!(evaluate_files(&dir.path().join("pred.ply"), &dir.path().join("gt.ply"), &c).unwrap(), doc);
    }
}
