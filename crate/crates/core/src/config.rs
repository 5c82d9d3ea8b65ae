//! One JSON document configuring every pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::net::NetworkConfig;
use crate::recon::ReconConfig;
use crate::synthetic::SyntheticConfig;
use crate::trainer::dataset::DatagenConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory of colored scan meshes (datagen input).
    pub scans: Option<PathBuf>,
    /// Directory of body meshes named after the scans.
    pub bodies: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Output directory of `reconstruct` / `synth`, or `metrics.json` path of `eval`.
    pub output: Option<PathBuf>,
    /// A view-pair directory (front.png, back.png, camera.json, ...) used as
    /// defaults for the individual reconstruction inputs below.
    pub pair: Option<PathBuf>,
    pub front: Option<PathBuf>,
    pub back: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub joints: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    pub body: Option<PathBuf>,
    /// Body joint vertex list (`[{name, vertex}]`).
    pub body_joints: Option<PathBuf>,
    /// Precomputed image-frame normal maps (MCI); predicted when absent.
    pub front_normals: Option<PathBuf>,
    pub back_normals: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    /// CSV of `pred_path,gt_path` rows for batch evaluation.
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Zero the body embedding fed to both heads.
    pub no_body_embedding: bool,
    /// Geometry encoder sees rgb instead of predicted normals.
    pub no_normal_guidance: bool,
    /// Replace the back image with the mirrored front.
    pub mirror_hallucination: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; all logical cores when absent. Results do not depend on it.
    pub workers: Option<usize>,
    pub paths: Paths,
    pub datagen: DatagenConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub recon: ReconConfig,
    pub eval: EvalConfig,
    pub synthetic: SyntheticConfig,
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: None,
            paths: Paths::default(),
            datagen: DatagenConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            recon: ReconConfig::default(),
            eval: EvalConfig::default(),
            synthetic: SyntheticConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl RunConfig {
    /// Parses JSON, reporting unknown or mistyped keys by their full path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_network().validate()?;
        self.train.validate()?;
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// Network settings with the ablation switches applied.
    pub fn effective_network(&self) -> NetworkConfig {
        let mut n = self.network.clone();
        if self.ablation.no_body_embedding {
            n.use_body_embedding = false;
        }
        if self.ablation.no_normal_guidance {
            n.use_normal_guidance = false;
        }
        n
    }
}
