//! 3×3, pad-1 convolution stacks via im2col + gemm, HWC layout.
//!
//! Work is split into fixed-size bands of output pixels; per-band weight
//! gradients are summed in band order, so results do not depend on the number
//! of worker threads.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::params::Layout;
use crate::net::real::{gemm, leaky, Real};

const BAND: usize = 1024;

/// `h × w × c` tensor, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::ShapeMismatch(format!("tensor {h}x{w}x{c} with {} values", data.len())));
        }
        Ok(Tensor { h, w, c, data })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Tensor {
            h,
            w,
            c,
            data: vec![T::zero(); h * w * c],
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().map(|v| U::c(v.f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub activate: bool,
}

impl ConvLayer {
    pub fn out_size(&self, n: usize) -> usize {
        (n - 1) / self.stride + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    pub layers: Vec<ConvLayer>,
    w: Vec<Range<usize>>,
    b: Vec<Range<usize>>,
    slope: f64,
}

/// Activations kept for the backward pass: the input of every layer and the
/// final output.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    acts: Vec<Tensor<T>>,
}

impl<T> ConvCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("non-empty cache")
    }
}

impl ConvNet {
    /// Registers the stack's weights under `prefix.{i}.w|b` in `layout`.
    pub fn register(layout: &mut Layout, prefix: &str, layers: Vec<ConvLayer>, slope: f64) -> Self {
        let mut w = Vec::new();
        let mut b = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            w.push(layout.push(format!("{prefix}.{i}.w"), &[9 * l.cin, l.cout]));
            b.push(layout.push(format!("{prefix}.{i}.b"), &[l.cout]));
        }
        ConvNet { layers, w, b, slope }
    }

    pub fn stride_product(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].cin
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().unwrap().cout
    }

    pub fn forward<T: Real>(&self, params: &[T], input: Tensor<T>) -> Result<ConvCache<T>> {
        if input.c != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "conv input has {} channels, expected {}",
                input.c,
                self.in_channels()
            )));
        }
        let slope = T::c(self.slope);
        let mut acts = vec![input];
        for (i, l) in self.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let (ho, wo) = (l.out_size(x.h), l.out_size(x.w));
            let wts = &params[self.w[i].clone()];
            let bias = &params[self.b[i].clone()];
            let mut out = vec![T::zero(); ho * wo * l.cout];
            out.par_chunks_mut(BAND * l.cout).enumerate().for_each(|(bi, o)| {
                let p0 = bi * BAND;
                let np = o.len() / l.cout;
                let cols = im2col(x, l.stride, wo, p0, np);
                for row in o.chunks_mut(l.cout) {
                    row.copy_from_slice(bias);
                }
                gemm(false, false, np, l.cout, 9 * l.cin, &cols, wts, T::one(), o);
                if l.activate {
                    o.iter_mut().for_each(|v| *v = leaky(*v, slope));
                }
            });
            acts.push(Tensor {
                h: ho,
                w: wo,
                c: l.cout,
                data: out,
            });
        }
        Ok(ConvCache { acts })
    }

    /// Accumulates parameter gradients into `grad` (full parameter vector) and
    /// returns the gradient w.r.t. the input when `want_input` is set.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        cache: &ConvCache<T>,
        dout: &[T],
        grad: &mut [T],
        want_input: bool,
    ) -> Option<Vec<T>> {
        let slope = T::c(self.slope);
        let mut dy = dout.to_vec();
        for i in (0..self.layers.len()).rev() {
            let l = self.layers[i];
            let x = &cache.acts[i];
            let y = &cache.acts[i + 1];
            if l.activate {
                // output and pre-activation share sign since slope > 0
                for (d, &o) in dy.iter_mut().zip(&y.data) {
                    if o <= T::zero() {
                        *d *= slope;
                    }
                }
            }
            let need_dx = want_input || i > 0;
            let wts = &params[self.w[i].clone()];
            let k = 9 * l.cin;
            let parts: Vec<(Vec<T>, Vec<T>, Option<Vec<T>>)> = dy
                .par_chunks(BAND * l.cout)
                .enumerate()
                .map(|(bi, d)| {
                    let p0 = bi * BAND;
                    let np = d.len() / l.cout;
                    let cols = im2col(x, l.stride, y.w, p0, np);
                    let mut dw = vec![T::zero(); k * l.cout];
                    gemm(true, false, k, l.cout, np, &cols, d, T::zero(), &mut dw);
                    let mut db = vec![T::zero(); l.cout];
                    for row in d.chunks(l.cout) {
                        for (a, &b) in db.iter_mut().zip(row) {
                            *a += b;
                        }
                    }
                    let dcols = need_dx.then(|| {
                        let mut dc = vec![T::zero(); np * k];
                        gemm(false, true, np, k, l.cout, d, wts, T::zero(), &mut dc);
                        dc
                    });
                    (dw, db, dcols)
                })
                .collect();
            let mut dx = need_dx.then(|| vec![T::zero(); x.data.len()]);
            for (bi, (dw, db, dcols)) in parts.into_iter().enumerate() {
                for (g, v) in grad[self.w[i].clone()].iter_mut().zip(dw) {
                    *g += v;
                }
                for (g, v) in grad[self.b[i].clone()].iter_mut().zip(db) {
                    *g += v;
                }
                if let (Some(dx), Some(dc)) = (dx.as_mut(), dcols) {
                    col2im(&dc, x, l.stride, y.w, bi * BAND, dx);
                }
            }
            match dx {
                Some(d) => dy = d,
                None => return None,
            }
        }
        Some(dy)
    }
}

/// Rows `p0..p0+np` of the im2col matrix (`np × 9·c`), zero padding 1.
fn im2col<T: Real>(x: &Tensor<T>, stride: usize, wo: usize, p0: usize, np: usize) -> Vec<T> {
    let c = x.c;
    let mut cols = vec![T::zero(); np * 9 * c];
    for (r, row) in cols.chunks_mut(9 * c).enumerate() {
        let p = p0 + r;
        let (oy, ox) = (p / wo, p % wo);
        for ky in 0..3 {
            let iy = (oy * stride + ky) as isize - 1;
            if iy < 0 || iy >= x.h as isize {
                continue;
            }
            for kx in 0..3 {
                let ix = (ox * stride + kx) as isize - 1;
                if ix < 0 || ix >= x.w as isize {
                    continue;
                }
                let src = (iy as usize * x.w + ix as usize) * c;
                let dst = (ky * 3 + kx) * c;
                row[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
            }
        }
    }
    cols
}

fn col2im<T: Real>(dcols: &[T], x: &Tensor<T>, stride: usize, wo: usize, p0: usize, dx: &mut [T]) {
    let c = x.c;
    for (r, row) in dcols.chunks(9 * c).enumerate() {
        let p = p0 + r;
        let (oy, ox) = (p / wo, p % wo);
        for ky in 0..3 {
            let iy = (oy * stride + ky) as isize - 1;
            if iy < 0 || iy >= x.h as isize {
                continue;
            }
            for kx in 0..3 {
                let ix = (ox * stride + kx) as isize - 1;
                if ix < 0 || ix >= x.w as isize {
                    continue;
                }
                let dst = (iy as usize * x.w + ix as usize) * c;
                let src = (ky * 3 + kx) * c;
                for (d, &s) in dx[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                    *d += s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::gradient_check;
    use crate::net::params::{kaiming_init, ParameterSet};
    use rand::{Rng, SeedableRng};

    fn net() -> (ConvNet, ParameterSet) {
        let mut layout = Layout::default();
        let layers = vec![
            ConvLayer { cin: 2, cout: 3, stride: 1, activate: true },
            ConvLayer { cin: 3, cout: 4, stride: 2, activate: true },
            ConvLayer { cin: 4, cout: 2, stride: 2, activate: false },
        ];
        let n = ConvNet::register(&mut layout, "c", layers, 0.01);
        let mut p = ParameterSet::zeros(layout);
        kaiming_init(&mut p, 0.01, 3);
        for v in p.data.iter_mut().skip(1).step_by(7) {
            *v += 0.05; // nonzero biases too
        }
        (n, p)
    }

    fn input(h: usize, w: usize, c: usize, seed: u64) -> Tensor<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn output_shapes() {
        let (n, p) = net();
        let out = n.forward(&p.data, Tensor::<f32>::zeros(9, 8, 2)).unwrap();
        assert_eq!((out.output().h, out.output().w, out.output().c), (3, 2, 2));
        assert!(n.forward(&p.data, Tensor::<f32>::zeros(8, 8, 3)).is_err());
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let (n, mut p) = net();
        for l in p.layout.layers().to_vec() {
            if l.name.ends_with(".b") {
                p.data[l.range()].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let out = n.forward(&p.data, Tensor::<f32>::zeros(8, 8, 2)).unwrap();
        assert!(out.output().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (n, p) = net();
        let x = input(8, 8, 2, 4);
        let probe = input(2, 2, 2, 5).data;
        let loss = |params: &[f64], x: &Tensor<f64>| -> f64 {
            let c = n.forward(params, x.clone()).unwrap();
            c.output().data.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let p64 = p.to_f64();
        let cache = n.forward(&p64, x.clone()).unwrap();
        let mut grad = vec![0.0; p64.len()];
        let dx = n.backward(&p64, &cache, &probe, &mut grad, true).unwrap();
        let err = gradient_check(|q| loss(q, &x), &p64, &grad, 64, 7);
        assert!(err <= 1e-4, "param grad error {err}");
        let err = gradient_check(|xd| loss(&p64, &Tensor::new(8, 8, 2, xd.to_vec()).unwrap()), &x.data, &dx, 64, 8);
        assert!(err <= 1e-4, "input grad error {err}");
    }

    #[test]
    fn band_split_matches_single_band() {
        // a 40×40 input spans two output bands at stride 1
        let (n, p) = net();
        let x = input(70, 40, 2, 6);
        let full = n.forward(&p.to_f64(), x.clone()).unwrap();
        let mut acc = x.clone();
        for (i, l) in n.layers.iter().enumerate() {
            let (ho, wo) = (l.out_size(acc.h), l.out_size(acc.w));
            let cols = im2col(&acc, l.stride, wo, 0, ho * wo);
            let mut out: Vec<f64> = (0..ho * wo).flat_map(|_| p.to_f64()[n.b[i].clone()].to_vec()).collect();
            gemm(false, false, ho * wo, l.cout, 9 * l.cin, &cols, &p.to_f64()[n.w[i].clone()], 1.0, &mut out);
            if l.activate {
                out.iter_mut().for_each(|v| *v = leaky(*v, 0.01));
            }
            acc = Tensor::new(ho, wo, l.cout, out).unwrap();
        }
        assert_eq!(full.output().data, acc.data);
    }
}
