//! Per-phase training objectives: forward through encoders and heads, loss,
//! and the full parameter gradient. Generic over the scalar so the same code
//! is gradient-checked in `f64`.

use rayon::prelude::*;

use crate::embed::BodyPrior;
use crate::error::Result;
use crate::field::{build_rows, scatter_rows, PointQuery, QueryFrame};
use crate::geom::Vec3;
use crate::net::conv::Tensor;
use crate::net::model::{guided_backward, guided_tensor, NormalPrediction};
use crate::net::{Head, Model, Real};
use crate::raster::OrthoCamera;
use crate::trainer::loss::{color_loss, geometry_loss, masked_l1, stencil_points, GeometryLossParams, STENCIL};
use crate::trainer::samples::TrainingSample;

/// Samples per parallel work item; gradients are reduced in chunk order.
pub const CHUNK: usize = 64;

/// One front/back view pair as network inputs.
#[derive(Debug, Clone)]
pub struct ViewPair<T> {
    /// `h × w × 4` rgb + alpha.
    pub front: Tensor<T>,
    pub back: Tensor<T>,
    pub front_cam: OrthoCamera,
    pub back_cam: OrthoCamera,
}

#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub loss: T,
    pub parts: Vec<T>,
    /// Full-length parameter gradient.
    pub grad: Vec<T>,
}

struct Encoded<T> {
    normals: Option<NormalPrediction<T>>,
    cache: crate::net::model::EncoderCache<T>,
    map: crate::embed::FeatureMap<T>,
}

fn encode_view<T: Real>(
    model: &Model,
    head: Head,
    params: &[T],
    rgba: &Tensor<T>,
    cam: &OrthoCamera,
) -> Result<Encoded<T>> {
    let guided = head == Head::Geometry && model.config.use_normal_guidance;
    let (normals, input) = if guided {
        let pred = model.predict_normals(params, rgba)?;
        let t = guided_tensor(&pred.normals, rgba);
        (Some(pred), t)
    } else {
        (None, rgba.clone())
    };
    let (map, cache) = model.encode(head, params, input, cam)?;
    Ok(Encoded { normals, cache, map })
}

fn backward_view<T: Real>(
    model: &Model,
    head: Head,
    params: &[T],
    enc: &Encoded<T>,
    rgba: &Tensor<T>,
    dmap: &[T],
    grad: &mut [T],
    through_normals: bool,
) {
    let want = through_normals && enc.normals.is_some();
    let dx = model.encoder(head).backward(params, &enc.cache, dmap, grad, want);
    if let (Some(dx), Some(pred)) = (dx, &enc.normals) {
        let dn = guided_backward(&dx, rgba);
        model.normals_backward(params, pred, &dn, grad);
    }
}

fn queries<T: Real>(
    model: &Model,
    pair: &ViewPair<T>,
    map: &crate::embed::FeatureMap<T>,
    body: Option<&BodyPrior>,
    points: &[Vec3],
) -> Vec<PointQuery> {
    let frame = QueryFrame {
        front: &pair.front_cam,
        back: &pair.back_cam,
        map_h: map.height,
        map_w: map.width,
        stride: map.stride,
        body: if model.config.use_body_embedding { body } else { None },
    };
    points.par_iter().map(|x| frame.query(x)).collect()
}

/// Runs a head over `queries` in chunks of `CHUNK · per` rows, then calls
/// `loss` on the concatenated outputs and backpropagates its gradient to the
/// parameters and both feature maps.
#[allow(clippy::too_many_arguments)]
fn decode_and_backprop<T: Real>(
    model: &Model,
    head: Head,
    params: &[T],
    queries: &[PointQuery],
    per: usize,
    front: &crate::embed::FeatureMap<T>,
    back: &crate::embed::FeatureMap<T>,
    loss: impl FnOnce(&[T]) -> (T, Vec<T>, Vec<T>),
) -> Result<(T, Vec<T>, Vec<T>, Vec<T>, Vec<T>)> {
    let mlp = model.head(head);
    let out = mlp.shape.output;
    let rows = CHUNK * per;
    let caches: Vec<_> = queries
        .par_chunks(rows)
        .map(|q| mlp.forward(params, &build_rows(q, front, back), true))
        .collect::<Result<_>>()?;
    let pred: Vec<T> = caches.iter().flat_map(|c| c.output.iter().copied()).collect();
    let (total, parts, dpred) = loss(&pred);
    let dim = front.dim;
    let partial: Vec<_> = caches
        .par_iter()
        .zip(queries.par_chunks(rows))
        .zip(dpred.par_chunks(rows * out))
        .map(|((cache, q), dp)| {
            let mut g = vec![T::zero(); params.len()];
            let dx = mlp.backward(params, cache, dp, &mut g);
            let mut df = vec![T::zero(); front.data.len()];
            let mut db = vec![T::zero(); back.data.len()];
            scatter_rows(q, &dx, dim, &mut df, &mut db);
            (g, df, db)
        })
        .collect();
    let mut grad = vec![T::zero(); params.len()];
    let mut dfront = vec![T::zero(); front.data.len()];
    let mut dback = vec![T::zero(); back.data.len()];
    for (g, df, db) in partial {
        add(&mut grad, &g);
        add(&mut dfront, &df);
        add(&mut dback, &db);
    }
    Ok((total, parts, grad, dfront, dback))
}

fn add<T: Real>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// Geometry phase: SDF L1 plus the finite-difference normal term, through the
/// geometry head, geometry encoder and (when `finetune_normals`) the normal
/// predictor.
pub fn geometry_objective<T: Real>(
    model: &Model,
    params: &[T],
    pair: &ViewPair<T>,
    body: Option<&BodyPrior>,
    samples: &[TrainingSample],
    lp: &GeometryLossParams,
    finetune_normals: bool,
) -> Result<Objective<T>> {
    let ef = encode_view(model, Head::Geometry, params, &pair.front, &pair.front_cam)?;
    let eb = encode_view(model, Head::Geometry, params, &pair.back, &pair.back_cam)?;
    let pts: Vec<Vec3> = samples.iter().flat_map(|s| stencil_points(&s.x, lp.fd_step)).collect();
    let qs = queries(model, pair, &ef.map, body, &pts);
    let d: Vec<f64> = samples.iter().map(|s| s.d).collect();
    let n: Vec<Vec3> = samples.iter().map(|s| s.n).collect();
    let (loss, parts, mut grad, df, db) = decode_and_backprop(model, Head::Geometry, params, &qs, STENCIL, &ef.map, &eb.map, |p| {
        let l = geometry_loss(p, &d, &n, lp);
        (l.total, l.parts, l.grad)
    })?;
    backward_view(model, Head::Geometry, params, &ef, &pair.front, &df, &mut grad, finetune_normals);
    backward_view(model, Head::Geometry, params, &eb, &pair.back, &db, &mut grad, finetune_normals);
    Ok(Objective { loss, parts, grad })
}

/// Color phase: L1 on RGB through the color head and color encoder.
pub fn color_objective<T: Real>(
    model: &Model,
    params: &[T],
    pair: &ViewPair<T>,
    body: Option<&BodyPrior>,
    samples: &[TrainingSample],
) -> Result<Objective<T>> {
    let ef = encode_view(model, Head::Color, params, &pair.front, &pair.front_cam)?;
    let eb = encode_view(model, Head::Color, params, &pair.back, &pair.back_cam)?;
    let pts: Vec<Vec3> = samples.iter().map(|s| s.x).collect();
    let qs = queries(model, pair, &ef.map, body, &pts);
    let r: Vec<Vec3> = samples.iter().map(|s| s.r).collect();
    let (loss, parts, mut grad, df, db) = decode_and_backprop(model, Head::Color, params, &qs, 1, &ef.map, &eb.map, |p| {
        let l = color_loss(p, &r);
        (l.total, l.parts, l.grad)
    })?;
    backward_view(model, Head::Color, params, &ef, &pair.front, &df, &mut grad, false);
    backward_view(model, Head::Color, params, &eb, &pair.back, &db, &mut grad, false);
    Ok(Objective { loss, parts, grad })
}

/// Sum of the geometry and color objectives on the same samples.
pub fn total_objective<T: Real>(
    model: &Model,
    params: &[T],
    pair: &ViewPair<T>,
    body: Option<&BodyPrior>,
    samples: &[TrainingSample],
    lp: &GeometryLossParams,
) -> Result<Objective<T>> {
    let g = geometry_objective(model, params, pair, body, samples, lp, true)?;
    let c = color_objective(model, params, pair, body, samples)?;
    let mut grad = g.grad;
    add(&mut grad, &c.grad);
    let mut parts = g.parts;
    parts.extend(c.parts);
    Ok(Objective {
        loss: g.loss + c.loss,
        parts,
        grad,
    })
}

/// Normal-predictor phase: mean of the masked L1 on the front and back views.
///
/// `targets` are `h × w × 3` image-frame normals; `masks` mark foreground.
pub fn normal_objective<T: Real>(
    model: &Model,
    params: &[T],
    inputs: [&Tensor<T>; 2],
    targets: [&Tensor<T>; 2],
    masks: [&[bool]; 2],
) -> Result<Objective<T>> {
    let mut grad = vec![T::zero(); params.len()];
    let mut loss = T::zero();
    let half = T::c(0.5);
    for k in 0..2 {
        let pred = model.predict_normals(params, inputs[k])?;
        let l = masked_l1(&pred.normals.data, &targets[k].data, masks[k]);
        let dn: Vec<T> = l.grad.iter().map(|&g| g * half).collect();
        model.normals_backward(params, &pred, &dn, &mut grad);
        loss += l.total * half;
    }
    Ok(Objective {
        loss,
        parts: vec![loss],
        grad,
    })
}
