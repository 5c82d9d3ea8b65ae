//! Inference: back view, body alignment, field evaluation and extraction.

pub mod align;
pub mod field;
pub mod grid;
pub mod mc;
pub mod mc_tables;
pub mod neldermead;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use align::{align_body, project_joints, AlignConfig, AlignmentResult, Joint2d, JointRef};
pub use field::{evaluate_field, Field, FieldInputs, FieldOptions, FieldStats};
pub use grid::VoxelGrid;
pub use mc::marching_cubes;

use crate::embed::BodyPrior;
use crate::error::Result;
use crate::geom::TriangleMesh;
use crate::net::Model;
use crate::raster::{MultiChannelImage, OrthoCamera};

/// Back-view stand-in: the front rgb + alpha flipped left-right.
pub fn mirror_hallucinate(front: &MultiChannelImage) -> Result<MultiChannelImage> {
    front.require("rgb")?;
    front.require("alpha")?;
    Ok(front.select(&["rgb", "alpha"]).flip_horizontal())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub field: FieldOptions,
    pub align: AlignConfig,
    /// Fit scale/offset to the mask and joints; otherwise the body is taken as
    /// already aligned.
    pub align_body: bool,
    pub iso: f32,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            field: FieldOptions::default(),
            align: AlignConfig::default(),
            align_body: true,
            iso: 0.0,
        }
    }
}

/// Everything one reconstruction consumes.
#[derive(Debug, Clone)]
pub struct ReconInputs {
    pub front: MultiChannelImage,
    /// `None` → mirrored front.
    pub back: Option<MultiChannelImage>,
    pub front_normals: Option<MultiChannelImage>,
    pub back_normals: Option<MultiChannelImage>,
    pub front_cam: OrthoCamera,
    pub back_cam: OrthoCamera,
    pub body: Option<TriangleMesh>,
    /// Foreground mask for alignment; the front alpha when `None`.
    pub mask: Option<MultiChannelImage>,
    pub joints: Vec<Joint2d>,
    pub regressor: Vec<JointRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub align_s: f64,
    pub field_s: f64,
    pub extract_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub resolution: usize,
    pub mirrored_back: bool,
    pub alignment: Option<AlignmentResult>,
    pub field: FieldStats,
    pub vertices: usize,
    pub faces: usize,
    pub timings: Timings,
}

/// align → normals (loaded or predicted) → field → marching cubes.
pub fn reconstruct(model: &Model, inputs: &ReconInputs, cfg: &ReconConfig) -> Result<(TriangleMesh, ReconReport)> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let mirrored_back = inputs.back.is_none();
    let back = match &inputs.back {
        Some(b) => b.clone(),
        None => mirror_hallucinate(&inputs.front)?,
    };

    let mut alignment = None;
    let body = match &inputs.body {
        Some(mesh) if model.config.use_body_embedding => {
            let mesh = if cfg.align_body {
                let mask = inputs.mask.as_ref().unwrap_or(&inputs.front);
                let mut acfg = cfg.align.clone();
                if inputs.joints.is_empty() {
                    acfg.joint_weight = 0.0;
                }
                let a = align_body(mesh, mask, &inputs.joints, &inputs.front_cam, &inputs.regressor, &acfg)?;
                let m = a.apply(mesh);
                alignment = Some(a);
                m
            } else {
                mesh.clone()
            };
            Some(BodyPrior::new(mesh)?)
        }
        _ => None,
    };
    timings.align_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let fin = FieldInputs {
        front: &inputs.front,
        back: &back,
        front_normals: inputs.front_normals.as_ref(),
        back_normals: inputs.back_normals.as_ref(),
        front_cam: &inputs.front_cam,
        back_cam: &inputs.back_cam,
        body: body.as_ref(),
    };
    let (grid, stats) = evaluate_field(model, &fin, &cfg.field)?;
    timings.field_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mesh = marching_cubes(&grid, cfg.iso)?;
    timings.extract_s = t.elapsed().as_secs_f64();
    log::info!(
        "reconstructed {} vertices, {} faces ({} sdf evaluations)",
        mesh.vertices().len(),
        mesh.faces().len(),
        stats.sdf_evaluations
    );
    let report = ReconReport {
        resolution: grid.n,
        mirrored_back,
        alignment,
        field: stats,
        vertices: mesh.vertices().len(),
        faces: mesh.faces().len(),
        timings,
    };
    Ok((mesh, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgba(h: usize, w: usize, f: impl Fn(usize, usize) -> [f32; 4]) -> MultiChannelImage {
        let mut rgb = Vec::new();
        let mut a = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let p = f(y, x);
                rgb.extend_from_slice(&p[..3]);
                a.push(p[3]);
            }
        }
        MultiChannelImage::new(h, w).with("rgb", 3, rgb).unwrap().with("alpha", 1, a).unwrap()
    }

    #[test]
    fn mirror_twice_is_identity() {
        let img = rgba(5, 7, |y, x| [x as f32 / 7.0, y as f32 / 5.0, 0.3, (x % 2) as f32]);
        assert_eq!(mirror_hallucinate(&mirror_hallucinate(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn mirror_moves_left_half_right() {
        let img = rgba(4, 8, |_, x| if x < 4 { [1.0, 0.0, 0.0, 1.0] } else { [0.0, 0.0, 1.0, 1.0] });
        let m = mirror_hallucinate(&img).unwrap();
        let rgb = m.get("rgb").unwrap();
        for y in 0..4 {
            for x in 0..8 {
                let red = rgb[3 * (y * 8 + x)] == 1.0;
                assert_eq!(red, x >= 4);
            }
        }
    }

    #[test]
    fn mirror_requires_alpha() {
        let img = MultiChannelImage::new(2, 2).with("rgb", 3, vec![0.0; 12]).unwrap();
        assert!(mirror_hallucinate(&img).is_err());
    }
}
