//! Evaluating the trained SDF + RGB field on a voxel grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::VoxelGrid;
use crate::embed::{BodyPrior, FeatureMap};
use crate::error::{Error, Result};
use crate::field::{build_rows, QueryFrame};
use crate::geom::Vec3;
use crate::net::conv::Tensor;
use crate::net::model::{guided_tensor, normal_tensor, rgba_tensor};
use crate::net::{Head, Model};
use crate::raster::{MultiChannelImage, OrthoCamera};

/// Images, cameras and body for one reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct FieldInputs<'a> {
    pub front: &'a MultiChannelImage,
    pub back: &'a MultiChannelImage,
    /// Precomputed image-frame normals; predicted by the model when `None`.
    pub front_normals: Option<&'a MultiChannelImage>,
    pub back_normals: Option<&'a MultiChannelImage>,
    pub front_cam: &'a OrthoCamera,
    pub back_cam: &'a OrthoCamera,
    pub body: Option<&'a BodyPrior>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldOptions {
    pub resolution: usize,
    /// Evaluate exactly only near the surface (found on a coarse lattice) and
    /// interpolate elsewhere; colors only where the surface crosses.
    pub coarse_to_fine: bool,
    pub coarse_stride: usize,
    /// Near-surface band, in coarse-cell diagonals.
    pub band: f64,
    /// Points per parallel work item.
    pub chunk: usize,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            resolution: 256,
            coarse_to_fine: true,
            coarse_stride: 4,
            band: 2.0,
            chunk: 2048,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub sdf_evaluations: usize,
    pub rgb_evaluations: usize,
}

/// Encoded views ready for point queries.
pub struct Field<'a> {
    model: &'a Model,
    geo: [FeatureMap<f32>; 2],
    color: [FeatureMap<f32>; 2],
    frame: QueryFrame<'a>,
    chunk: usize,
}

fn check_size(img: &MultiChannelImage, cam: &OrthoCamera) -> Result<()> {
    if (img.width(), img.height()) != (cam.width(), cam.height()) {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} vs camera {}x{}",
            img.width(),
            img.height(),
            cam.width(),
            cam.height()
        )));
    }
    Ok(())
}

impl<'a> Field<'a> {
    pub fn new(model: &'a Model, inputs: &FieldInputs<'a>, chunk: usize) -> Result<Self> {
        check_size(inputs.front, inputs.front_cam)?;
        check_size(inputs.back, inputs.back_cam)?;
        if model.config.use_body_embedding && inputs.body.is_none() {
            return Err(Error::MissingAttribute("body"));
        }
        let p = &model.params.data;
        let views = [
            (inputs.front, inputs.front_normals, inputs.front_cam),
            (inputs.back, inputs.back_normals, inputs.back_cam),
        ];
        let mut geo = Vec::new();
        let mut color = Vec::new();
        for (img, normals, cam) in views {
            let rgba: Tensor<f32> = rgba_tensor(img)?;
            let gin = if model.config.use_normal_guidance {
                let n = match normals {
                    Some(n) => {
                        check_size(n, cam)?;
                        normal_tensor(n)?
                    }
                    None => model.predict_normals(p, &rgba)?.normals,
                };
                guided_tensor(&n, &rgba)
            } else {
                rgba.clone()
            };
            geo.push(model.encode(Head::Geometry, p, gin, cam)?.0);
            color.push(model.encode(Head::Color, p, rgba, cam)?.0);
        }
        let [gf, gb]: [FeatureMap<f32>; 2] = geo.try_into().ok().unwrap();
        let [cf, cb]: [FeatureMap<f32>; 2] = color.try_into().ok().unwrap();
        let frame = QueryFrame {
            front: inputs.front_cam,
            back: inputs.back_cam,
            map_h: gf.height,
            map_w: gf.width,
            stride: gf.stride,
            body: if model.config.use_body_embedding { inputs.body } else { None },
        };
        Ok(Field {
            model,
            geo: [gf, gb],
            color: [cf, cb],
            frame,
            chunk: chunk.max(1),
        })
    }

    fn run(&self, head: Head, points: &[Vec3]) -> Vec<f32> {
        let maps = match head {
            Head::Geometry => &self.geo,
            Head::Color => &self.color,
        };
        let mlp = self.model.head(head);
        points
            .par_chunks(self.chunk)
            .flat_map_iter(|c| {
                let qs: Vec<_> = c.iter().map(|x| self.frame.query(x)).collect();
                let rows = build_rows(&qs, &maps[0], &maps[1]);
                mlp.forward(&self.model.params.data, &rows, false)
                    .expect("row width matches the head")
                    .output
            })
            .collect()
    }

    pub fn sdf(&self, points: &[Vec3]) -> Vec<f32> {
        self.run(Head::Geometry, points)
    }

    /// `3 · points.len()` values in `[0,1]`.
    pub fn rgb(&self, points: &[Vec3]) -> Vec<f32> {
        self.run(Head::Color, points)
    }
}

/// Samples the field on an `N³` grid over `[-1,1]³`.
pub fn evaluate_field(model: &Model, inputs: &FieldInputs, opts: &FieldOptions) -> Result<(VoxelGrid, FieldStats)> {
    let field = Field::new(model, inputs, opts.chunk)?;
    let mut grid = VoxelGrid::new(opts.resolution)?;
    let n = grid.n;
    let mut stats = FieldStats::default();
    if !opts.coarse_to_fine {
        let pts: Vec<Vec3> = (0..n * n * n).map(|i| grid.point_at(i)).collect();
        grid.sdf = field.sdf(&pts);
        grid.rgb = field.rgb(&pts);
        stats.sdf_evaluations = pts.len();
        stats.rgb_evaluations = pts.len();
        return Ok((grid, stats));
    }

    // coarse lattice: every `c`-th index plus the last one
    let c = opts.coarse_stride.max(1);
    let mut ticks: Vec<usize> = (0..n).step_by(c).collect();
    if *ticks.last().unwrap() != n - 1 {
        ticks.push(n - 1);
    }
    let m = ticks.len();
    let cpts: Vec<Vec3> = (0..m * m * m)
        .map(|i| grid.point(ticks[i % m], ticks[(i / m) % m], ticks[i / (m * m)]))
        .collect();
    let coarse = field.sdf(&cpts);
    stats.sdf_evaluations += cpts.len();
    let cidx = |a: usize, b: usize, k: usize| (k * m + b) * m + a;

    // coarse cells that may contain surface, dilated by one cell
    let band = opts.band * (c as f64) * grid.spacing() * 3f64.sqrt();
    let mc = m - 1;
    let mut active = vec![false; mc * mc * mc];
    for k in 0..mc {
        for b in 0..mc {
            for a in 0..mc {
                let vals: Vec<f32> = (0..8)
                    .map(|q| coarse[cidx(a + (q & 1), b + ((q >> 1) & 1), k + (q >> 2))])
                    .collect();
                let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let near = vals.iter().any(|v| (v.abs() as f64) < band);
                if (lo <= 0.0 && hi > 0.0) || near {
                    active[(k * mc + b) * mc + a] = true;
                }
            }
        }
    }
    let mut dilated = active.clone();
    for k in 0..mc {
        for b in 0..mc {
            for a in 0..mc {
                if !active[(k * mc + b) * mc + a] {
                    continue;
                }
                for dk in k.saturating_sub(1)..=(k + 1).min(mc - 1) {
                    for db in b.saturating_sub(1)..=(b + 1).min(mc - 1) {
                        for da in a.saturating_sub(1)..=(a + 1).min(mc - 1) {
                            dilated[(dk * mc + db) * mc + da] = true;
                        }
                    }
                }
            }
        }
    }

    // fine → coarse cell lookup along one axis
    let cell_of: Vec<usize> = (0..n).map(|i| ticks.partition_point(|&t| t <= i).saturating_sub(1).min(mc - 1)).collect();
    let mut exact = vec![false; n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let (a, b, ck) = (cell_of[i], cell_of[j], cell_of[k]);
                // a lattice point on a cell face belongs to every adjacent cell
                let touches = |f: usize, t: &usize| {
                    let mut v = vec![t.min(&(mc - 1)).to_owned()];
                    if ticks[*t] == f && *t > 0 {
                        v.push(t - 1);
                    }
                    v
                };
                let mut hit = false;
                'o: for &aa in &touches(i, &a) {
                    for &bb in &touches(j, &b) {
                        for &kk in &touches(k, &ck) {
                            if dilated[(kk * mc + bb) * mc + aa] {
                                hit = true;
                                break 'o;
                            }
                        }
                    }
                }
                exact[grid.index(i, j, k)] = hit;
            }
        }
    }

    // interpolate everywhere, then overwrite the exact points
    for k in 0..n {
        let (ck, tk) = frac(&ticks, &cell_of, k);
        for j in 0..n {
            let (cj, tj) = frac(&ticks, &cell_of, j);
            for i in 0..n {
                let (ci, ti) = frac(&ticks, &cell_of, i);
                let mut v = 0.0f64;
                for q in 0..8 {
                    let (da, db, dk) = (q & 1, (q >> 1) & 1, q >> 2);
                    let w = (if da == 1 { ti } else { 1.0 - ti })
                        * (if db == 1 { tj } else { 1.0 - tj })
                        * (if dk == 1 { tk } else { 1.0 - tk });
                    if w != 0.0 {
                        v += w * coarse[cidx(ci + da, cj + db, ck + dk)] as f64;
                    }
                }
                let idx = grid.index(i, j, k);
                grid.sdf[idx] = v as f32;
            }
        }
    }
    let exact_idx: Vec<usize> = (0..n * n * n).filter(|&i| exact[i]).collect();
    let pts: Vec<Vec3> = exact_idx.iter().map(|&i| grid.point_at(i)).collect();
    for (&i, v) in exact_idx.iter().zip(field.sdf(&pts)) {
        grid.sdf[i] = v;
    }
    stats.sdf_evaluations += pts.len();

    // colors at the corners of every cell the surface crosses
    let mut need = vec![false; n * n * n];
    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let mut inside = 0;
                for q in 0..8 {
                    inside += (grid.sdf[grid.index(i + (q & 1), j + ((q >> 1) & 1), k + (q >> 2))] <= 0.0) as usize;
                }
                if inside != 0 && inside != 8 {
                    for q in 0..8 {
                        need[grid.index(i + (q & 1), j + ((q >> 1) & 1), k + (q >> 2))] = true;
                    }
                }
            }
        }
    }
    let cidx_list: Vec<usize> = (0..n * n * n).filter(|&i| need[i]).collect();
    let cpts: Vec<Vec3> = cidx_list.iter().map(|&i| grid.point_at(i)).collect();
    let rgb = field.rgb(&cpts);
    for (t, &i) in cidx_list.iter().enumerate() {
        grid.rgb[3 * i..3 * i + 3].copy_from_slice(&rgb[3 * t..3 * t + 3]);
    }
    stats.rgb_evaluations = cpts.len();
    Ok((grid, stats))
}

/// Coarse cell and fractional position of fine index `i`.
fn frac(ticks: &[usize], cell_of: &[usize], i: usize) -> (usize, f64) {
    let c = cell_of[i];
    let (a, b) = (ticks[c], ticks[c + 1]);
    (c, (i - a) as f64 / (b - a) as f64)
}
