//! Training data generation and the three-phase training loop:
//! normal predictor → geometry (encoder + head, normals fine-tuned) → color.

pub mod dataset;
pub mod loss;
pub mod objective;
pub mod samples;

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::model::{GROUP_COLOR_ENCODER, GROUP_COLOR_HEAD, GROUP_GEO_ENCODER, GROUP_GEO_HEAD, GROUP_NORMAL};
use crate::net::{adam_step, load_checkpoint, save_checkpoint, AdamState, Model, NetworkConfig};

pub use dataset::{generate_dataset, load_dataset, DatagenConfig, DatagenReport, DatasetManifest};
pub use loss::{color_loss, geometry_loss, GeometryLossParams};
pub use objective::{color_objective, geometry_objective, normal_objective, total_objective, Objective, ViewPair};
pub use samples::{generate_samples, SamplingConfig, TrainingSample};

use dataset::LoadedScan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub normal_steps: usize,
    pub geometry_steps: usize,
    pub color_steps: usize,
    /// Query points drawn from a scan's sample set per step.
    pub points_per_step: usize,
    pub scans_per_batch: usize,
    pub learning_rate: f64,
    /// Learning rate of the normal predictor while the geometry phase runs.
    pub normal_finetune_lr: f64,
    pub geometry: GeometryLossParams,
    /// Color is supervised only at samples with `|d|` below this.
    pub color_band: f64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            normal_steps: 300,
            geometry_steps: 2000,
            color_steps: 1000,
            points_per_step: 512,
            scans_per_batch: 1,
            learning_rate: 1e-3,
            normal_finetune_lr: 1e-5,
            geometry: GeometryLossParams::default(),
            color_band: 0.1,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_step == 0 || self.scans_per_batch == 0 {
            return Err(Error::Config("points_per_step and scans_per_batch must be positive".into()));
        }
        if !(self.geometry.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be > 0".into()));
        }
        if !(self.learning_rate >= 0.0 && self.normal_finetune_lr >= 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        Ok(())
    }

    fn steps(&self, phase: Phase) -> usize {
        match phase {
            Phase::Normal => self.normal_steps,
            Phase::Geometry => self.geometry_steps,
            Phase::Color => self.color_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Normal,
    Geometry,
    Color,
}

pub const PHASES: [Phase; 3] = [Phase::Normal, Phase::Geometry, Phase::Color];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: Phase,
    pub steps: usize,
    /// Per-step total loss.
    pub loss: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub parameters: usize,
    pub completed: bool,
    pub phases: Vec<PhaseReport>,
}

/// Optimizer position saved next to a checkpoint so training can resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub seed: u64,
    pub phase: usize,
    pub step: usize,
    pub adam: AdamState,
    pub history: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from `<checkpoint>` and its state file.
    pub resume: bool,
    /// Stop (and save) once this many steps, counted across phases, are done.
    pub stop_after: Option<usize>,
}

pub fn state_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".state.json");
    PathBuf::from(s)
}

fn step_rng(seed: u64, phase: usize, step: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((phase as u64) << 40) | step as u64);
    r
}

fn lr_groups(model: &Model, phase: Phase, cfg: &TrainConfig) -> Vec<(Range<usize>, f64)> {
    let lr = cfg.learning_rate;
    match phase {
        Phase::Normal => vec![(model.group(GROUP_NORMAL), lr)],
        Phase::Geometry => {
            let mut g = vec![(model.group(GROUP_GEO_ENCODER), lr), (model.group(GROUP_GEO_HEAD), lr)];
            if model.config.use_normal_guidance && cfg.normal_finetune_lr > 0.0 {
                g.push((model.group(GROUP_NORMAL), cfg.normal_finetune_lr));
            }
            g
        }
        Phase::Color => vec![(model.group(GROUP_COLOR_ENCODER), lr), (model.group(GROUP_COLOR_HEAD), lr)],
    }
}

/// One optimizer step's objective for `phase`, averaged over the drawn scans.
fn phase_objective(
    model: &Model,
    scans: &[LoadedScan],
    color_idx: &[Vec<usize>],
    phase: Phase,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Objective<f32>> {
    let params = &model.params.data;
    let mut acc: Option<Objective<f32>> = None;
    let k = cfg.scans_per_batch;
    for _ in 0..k {
        let si = rng.random_range(0..scans.len());
        let scan = &scans[si];
        let pair = &scan.pairs[rng.random_range(0..scan.pairs.len())];
        let obj = match phase {
            Phase::Normal => normal_objective(
                model,
                params,
                [&pair.inputs.front, &pair.inputs.back],
                [&pair.normals[0], &pair.normals[1]],
                [&pair.masks[0], &pair.masks[1]],
            )?,
            Phase::Geometry => {
                let n = cfg.points_per_step.min(scan.samples.len());
                let idx = sample(rng, scan.samples.len(), n);
                let batch: Vec<TrainingSample> = idx.iter().map(|i| scan.samples[i]).collect();
                let finetune = model.config.use_normal_guidance && cfg.normal_finetune_lr > 0.0;
                geometry_objective(model, params, &pair.inputs, scan.body.as_ref(), &batch, &cfg.geometry, finetune)?
            }
            Phase::Color => {
                let pool = &color_idx[si];
                let n = cfg.points_per_step.min(pool.len());
                let idx = sample(rng, pool.len(), n);
                let batch: Vec<TrainingSample> = idx.iter().map(|i| scan.samples[pool[i]]).collect();
                color_objective(model, params, &pair.inputs, scan.body.as_ref(), &batch)?
            }
        };
        acc = Some(match acc {
            None => obj,
            Some(mut a) => {
                a.loss += obj.loss;
                a.grad.iter_mut().zip(&obj.grad).for_each(|(x, y)| *x += y);
                a
            }
        });
    }
    let mut a = acc.expect("scans_per_batch >= 1");
    if k > 1 {
        let s = 1.0 / k as f32;
        a.loss *= s;
        a.grad.iter_mut().for_each(|g| *g *= s);
    }
    Ok(a)
}

/// Trains (or resumes training of) a model on the dataset at `dataset`,
/// writing the checkpoint and its resume state to `checkpoint`.
pub fn train(
    net: &NetworkConfig,
    cfg: &TrainConfig,
    dataset: &Path,
    checkpoint: &Path,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    cfg.validate()?;
    net.validate()?;
    let (_, scans) = load_dataset(dataset, net.use_body_embedding)?;
    if scans.iter().any(|s| s.pairs.is_empty() || s.samples.is_empty()) {
        return Err(Error::Config("every scan needs at least one view pair and one sample".into()));
    }
    let color_idx: Vec<Vec<usize>> = scans
        .iter()
        .map(|s| {
            let v: Vec<usize> = (0..s.samples.len()).filter(|&i| s.samples[i].d.abs() < cfg.color_band).collect();
            if v.is_empty() {
                (0..s.samples.len()).collect()
            } else {
                v
            }
        })
        .collect();

    let (mut model, mut state) = if opts.resume {
        let model = load_checkpoint(checkpoint, Some(net))?;
        let sp = state_path(checkpoint);
        let state: TrainState = dataset::read_json(&sp)?;
        if state.seed != seed {
            return Err(Error::Config(format!("resume seed {seed} differs from saved seed {}", state.seed)));
        }
        (model, state)
    } else {
        let model = Model::new(net, seed)?;
        let n = model.params.data.len();
        (
            model,
            TrainState {
                seed,
                phase: 0,
                step: 0,
                adam: AdamState::new(n),
                history: vec![Vec::new(); 3],
            },
        )
    };

    let mut done_global: usize = (0..state.phase.min(3)).map(|p| cfg.steps(PHASES[p])).sum::<usize>() + state.step;
    let mut stopped = false;
    'phases: while state.phase < 3 {
        let phase = PHASES[state.phase];
        let total = cfg.steps(phase);
        let groups = lr_groups(&model, phase, cfg);
        while state.step < total {
            if opts.stop_after.is_some_and(|s| done_global >= s) {
                stopped = true;
                break 'phases;
            }
            let mut rng = step_rng(seed, state.phase, state.step);
            let obj = phase_objective(&model, &scans, &color_idx, phase, cfg, &mut rng)?;
            adam_step(&mut model.params.data, &obj.grad, &mut state.adam, &groups)?;
            state.history[state.phase].push(obj.loss);
            state.step += 1;
            done_global += 1;
            if cfg.log_every > 0 && (state.step % cfg.log_every == 0 || state.step == total) {
                let h = &state.history[state.phase];
                let w = &h[h.len().saturating_sub(cfg.log_every.max(1))..];
                info!(
                    "{phase:?} step {}/{total}: loss {:.5} (window mean {:.5})",
                    state.step,
                    obj.loss,
                    w.iter().sum::<f32>() / w.len() as f32
                );
            }
        }
        state.phase += 1;
        state.step = 0;
        state.adam = AdamState::new(model.params.data.len());
    }

    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&model, checkpoint)?;
    let sp = state_path(checkpoint);
    fs::write(&sp, serde_json::to_vec(&state)?).map_err(|e| Error::io(&sp, e))?;
    Ok(TrainReport {
        seed,
        parameters: model.params.data.len(),
        completed: !stopped,
        phases: PHASES
            .iter()
            .enumerate()
            .map(|(i, &p)| PhaseReport {
                phase: p,
                steps: state.history[i].len(),
                loss: state.history[i].clone(),
            })
            .collect(),
    })
}
