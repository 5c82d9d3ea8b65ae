//! On-disk training sets.
//!
//! ```text
//! dataset.json
//! scans/<name>.ply            normalized scan (vertex colors)
//! bodies/<name>.ply           body mesh in the scan's frame (UVs)
//! bodies/<name>.joints.json   optional [{name, vertex}]
//! samples/<name>.bin          SMP1 query samples
//! views/<name>/pair_NNN/      front.png back.png front_normal.mci back_normal.mci
//!                             mask.png body_uv.mci camera.json joints.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::BodyPrior;
use crate::error::{Error, Result};
use crate::geom::{load_mesh, normalize_to_cube, save_mesh, Normalization, TriangleMesh};
use crate::net::conv::Tensor;
use crate::net::model::{normal_tensor, rgba_tensor};
use crate::raster::{make_view_pair, orbit_azimuths, render, Channel, MultiChannelImage, OrthoCamera, RenderOptions, ViewSetup};
use crate::recon::align::{project_joints, JointRef};
use crate::trainer::objective::ViewPair;
use crate::trainer::samples::{generate_samples, load_samples, save_samples, SamplingConfig, TrainingSample};

pub const MANIFEST: &str = "dataset.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenConfig {
    /// Evenly spaced azimuths; ignored when `azimuths` is set.
    pub views: usize,
    pub azimuths: Option<Vec<f64>>,
    pub view: ViewSetup,
    pub sampling: SamplingConfig,
    pub background: [f32; 3],
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            views: 20,
            azimuths: None,
            view: ViewSetup::default(),
            sampling: SamplingConfig::default(),
            background: [1.0, 1.0, 1.0],
        }
    }
}

impl DatagenConfig {
    pub fn azimuth_list(&self) -> Vec<f64> {
        self.azimuths.clone().unwrap_or_else(|| orbit_azimuths(self.views))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCameras {
    pub azimuth: f64,
    pub front: OrthoCamera,
    pub back: OrthoCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: String,
    pub azimuth: f64,
    /// Relative to the dataset root.
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub id: u32,
    pub name: String,
    pub scan: String,
    pub body: Option<String>,
    pub joints: Option<String>,
    pub samples: String,
    /// Map from the source scan's frame into the dataset frame.
    pub normalization: Normalization,
    pub pairs: Vec<PairEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub config: DatagenConfig,
    pub scans: Vec<ScanEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenFailure {
    pub path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenReport {
    pub manifest: DatasetManifest,
    pub failures: Vec<DatagenFailure>,
}

fn is_mesh(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("ply" | "obj")
    )
}

/// Sorted mesh files in a directory.
pub fn list_meshes(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_mesh(p))
        .collect();
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Stable per-name seed offset (FNV-1a).
fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn find_body(bodies: Option<&Path>, name: &str) -> Option<PathBuf> {
    let dir = bodies?;
    ["ply", "obj"].iter().map(|e| dir.join(format!("{name}.{e}"))).find(|p| p.is_file())
}

/// Renders the view pairs and draws the query samples for every scan in
/// `scans_dir`. Bodies (and optional joint lists) are looked up by file stem
/// in `bodies_dir`. A scan that fails is reported and skipped.
pub fn generate_dataset(
    scans_dir: &Path,
    bodies_dir: Option<&Path>,
    out: &Path,
    cfg: &DatagenConfig,
    seed: u64,
) -> Result<DatagenReport> {
    let scans = list_meshes(scans_dir)?;
    if scans.is_empty() {
        return Err(Error::MissingFiles(vec![scans_dir.join("*.ply")]));
    }
    for d in ["scans", "bodies", "samples", "views"] {
        fs::create_dir_all(out.join(d)).map_err(|e| Error::io(out.join(d), e))?;
    }
    let results: Vec<(PathBuf, Result<ScanEntry>)> = scans
        .par_iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), generate_scan(p, i as u32, bodies_dir, out, cfg, seed)))
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (p, r) in results {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => {
                warn!("skipping {}: {e}", p.display());
                failures.push(DatagenFailure {
                    path: p,
                    error: e.to_string(),
                })
            }
        }
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        seed,
        config: cfg.clone(),
        scans: entries,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(DatagenReport { manifest, failures })
}

fn generate_scan(
    path: &Path,
    id: u32,
    bodies_dir: Option<&Path>,
    out: &Path,
    cfg: &DatagenConfig,
    seed: u64,
) -> Result<ScanEntry> {
    let name = stem(path);
    let raw = load_mesh(path)?;
    if raw.colors().is_none() {
        return Err(Error::MissingAttribute("color"));
    }
    let (scan, norm) = normalize_to_cube(&raw)?;
    let scan_rel = format!("scans/{name}.ply");
    save_mesh(&scan, &out.join(&scan_rel))?;

    let (body, body_rel, joints, joints_rel) = match find_body(bodies_dir, &name) {
        Some(bp) => {
            let body = norm.apply_mesh(&load_mesh(&bp)?);
            let rel = format!("bodies/{name}.ply");
            save_mesh(&body, &out.join(&rel))?;
            let jp = bp.with_file_name(format!("{name}.joints.json"));
            let (joints, jrel) = if jp.is_file() {
                let j: Vec<JointRef> = read_json(&jp)?;
                if let Some(bad) = j.iter().find(|j| j.vertex >= body.vertices().len()) {
                    return Err(Error::InvalidMesh(format!("joint {} references a missing vertex", bad.name)));
                }
                let rel = format!("bodies/{name}.joints.json");
                write_json(&out.join(&rel), &j)?;
                (j, Some(rel))
            } else {
                (Vec::new(), None)
            };
            (Some(body), Some(rel), joints, jrel)
        }
        None => (None, None, Vec::new(), None),
    };

    let sample_seed = seed ^ name_hash(&name);
    let samples = generate_samples(&scan, id, &cfg.sampling, sample_seed)?;
    let samples_rel = format!("samples/{name}.bin");
    save_samples(&samples, id, &out.join(&samples_rel))?;

    let mut pairs = Vec::new();
    for (k, &az) in cfg.azimuth_list().iter().enumerate() {
        let pid = format!("pair_{k:03}");
        let dir_rel = format!("views/{name}/{pid}");
        let dir = out.join(&dir_rel);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        render_pair(&scan, body.as_ref(), &joints, az, cfg, &dir)?;
        pairs.push(PairEntry {
            id: pid,
            azimuth: az,
            dir: dir_rel,
        });
    }
    info!("{name}: {} samples, {} view pairs", samples.len(), pairs.len());
    Ok(ScanEntry {
        id,
        name,
        scan: scan_rel,
        body: body_rel,
        joints: joints_rel,
        samples: samples_rel,
        normalization: norm,
        pairs,
    })
}

/// Writes one view pair directory.
pub fn render_pair(
    scan: &TriangleMesh,
    body: Option<&TriangleMesh>,
    joints: &[JointRef],
    azimuth: f64,
    cfg: &DatagenConfig,
    dir: &Path,
) -> Result<()> {
    let (front, back) = make_view_pair(azimuth, &cfg.view)?;
    let opts = RenderOptions {
        background: cfg.background,
    };
    for (cam, side) in [(&front, "front"), (&back, "back")] {
        let img = render(cam, scan, &[Channel::Rgb, Channel::Alpha, Channel::Normal], &opts)?;
        img.save_png(&dir.join(format!("{side}.png")))?;
        img.select(&["normal", "alpha"]).save_mci(&dir.join(format!("{side}_normal.mci")))?;
        if side == "front" {
            img.save_mask_png(&dir.join("mask.png"))?;
        }
    }
    if let Some(b) = body {
        if b.uvs().is_some() {
            render(&front, b, &[Channel::Uv, Channel::Alpha], &opts)?.save_mci(&dir.join("body_uv.mci"))?;
        }
        write_json(&dir.join("joints.json"), &project_joints(b, joints, &front))?;
    }
    write_json(
        &dir.join("camera.json"),
        &PairCameras {
            azimuth,
            front,
            back,
        },
    )
}

/// A loaded view pair with network-ready tensors.
#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub id: String,
    pub azimuth: f64,
    pub inputs: ViewPair<f32>,
    /// `h × w × 3` image-frame normals for the front and back views.
    pub normals: [Tensor<f32>; 2],
    pub masks: [Vec<bool>; 2],
}

#[derive(Debug, Clone)]
pub struct LoadedScan {
    pub id: u32,
    pub name: String,
    pub body: Option<BodyPrior>,
    pub samples: Vec<TrainingSample>,
    pub pairs: Vec<LoadedPair>,
}

const PAIR_FILES: [&str; 5] = ["front.png", "back.png", "front_normal.mci", "back_normal.mci", "camera.json"];

/// Loads everything training needs, failing with the full list of missing
/// files if any modality is absent.
pub fn load_dataset(root: &Path, need_body: bool) -> Result<(DatasetManifest, Vec<LoadedScan>)> {
    let mpath = root.join(MANIFEST);
    if !mpath.is_file() {
        return Err(Error::MissingFiles(vec![mpath]));
    }
    let manifest: DatasetManifest = read_json(&mpath)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Format(format!("dataset version {}", manifest.version)));
    }
    let mut missing = Vec::new();
    for s in &manifest.scans {
        missing.push(root.join(&s.samples));
        match &s.body {
            Some(b) => missing.push(root.join(b)),
            None if need_body => missing.push(root.join(format!("bodies/{}.ply", s.name))),
            None => {}
        }
        for p in &s.pairs {
            missing.extend(PAIR_FILES.iter().map(|f| root.join(&p.dir).join(f)));
        }
    }
    missing.retain(|p| !p.is_file());
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    if manifest.scans.is_empty() {
        return Err(Error::Config("dataset has no scans".into()));
    }
    let scans = manifest
        .scans
        .iter()
        .map(|s| load_scan(root, s, need_body))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, scans))
}

fn load_scan(root: &Path, s: &ScanEntry, need_body: bool) -> Result<LoadedScan> {
    let body = match (&s.body, need_body) {
        (Some(b), true) => Some(BodyPrior::new(load_mesh(&root.join(b))?)?),
        _ => None,
    };
    let pairs = s
        .pairs
        .iter()
        .map(|p| load_pair(&root.join(&p.dir), &p.id))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedScan {
        id: s.id,
        name: s.name.clone(),
        body,
        samples: load_samples(&root.join(&s.samples))?,
        pairs,
    })
}

pub fn load_pair(dir: &Path, id: &str) -> Result<LoadedPair> {
    let cams: PairCameras = read_json(&dir.join("camera.json"))?;
    let front = MultiChannelImage::load_png(&dir.join("front.png"))?;
    let back = MultiChannelImage::load_png(&dir.join("back.png"))?;
    let fnrm = MultiChannelImage::load_mci(&dir.join("front_normal.mci"))?;
    let bnrm = MultiChannelImage::load_mci(&dir.join("back_normal.mci"))?;
    let mask = |img: &MultiChannelImage| -> Result<Vec<bool>> { Ok(img.require("alpha")?.iter().map(|&a| a > 0.5).collect()) };
    Ok(LoadedPair {
        id: id.to_string(),
        azimuth: cams.azimuth,
        inputs: ViewPair {
            front: rgba_tensor(&front)?,
            back: rgba_tensor(&back)?,
            front_cam: cams.front,
            back_cam: cams.back,
        },
        normals: [normal_tensor(&fnrm)?, normal_tensor(&bnrm)?],
        masks: [mask(&fnrm)?, mask(&bnrm)?],
    })
}
