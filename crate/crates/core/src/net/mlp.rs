//! Batched MLP heads with input skip connections.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::params::Layout;
use crate::net::real::{gemm, leaky, sigmoid, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    None,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub width: usize,
    /// Number of hidden layers.
    pub layers: usize,
    /// 1-based hidden layers that also receive the network input.
    pub skips: Vec<usize>,
    pub output: usize,
}

impl MlpShape {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.width == 0 || self.layers == 0 || self.output == 0 {
            return Err(Error::Config(format!("mlp dims must be positive: {self:?}")));
        }
        if let Some(s) = self.skips.iter().find(|&&s| s < 2 || s > self.layers) {
            return Err(Error::Config(format!(
                "skip layer {s} outside 2..={}",
                self.layers
            )));
        }
        Ok(())
    }

    fn layer_input(&self, l: usize) -> usize {
        match l {
            1 => self.input,
            _ if self.skips.contains(&l) => self.width + self.input,
            _ => self.width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub shape: MlpShape,
    pub out_act: OutputActivation,
    w: Vec<Range<usize>>,
    b: Vec<Range<usize>>,
    slope: f64,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    rows: usize,
    /// Input matrix of every linear layer (hidden 1..=L, then output).
    inputs: Vec<Vec<T>>,
    /// Post-activation outputs of the hidden layers.
    hidden: Vec<Vec<T>>,
    pub output: Vec<T>,
}

impl Mlp {
    pub fn register(layout: &mut Layout, prefix: &str, shape: MlpShape, out_act: OutputActivation, slope: f64) -> Self {
        let mut w = Vec::new();
        let mut b = Vec::new();
        for l in 1..=shape.layers {
            w.push(layout.push(format!("{prefix}.{l}.w"), &[shape.layer_input(l), shape.width]));
            b.push(layout.push(format!("{prefix}.{l}.b"), &[shape.width]));
        }
        w.push(layout.push(format!("{prefix}.out.w"), &[shape.width, shape.output]));
        b.push(layout.push(format!("{prefix}.out.b"), &[shape.output]));
        Mlp {
            shape,
            out_act,
            w,
            b,
            slope,
        }
    }

    pub fn output_bias(&self) -> Range<usize> {
        self.b.last().unwrap().clone()
    }

    /// Forward pass over `x` (`rows × input`, row-major).
    pub fn forward<T: Real>(&self, params: &[T], x: &[T], keep: bool) -> Result<MlpCache<T>> {
        let s = &self.shape;
        if x.len() % s.input != 0 {
            return Err(Error::ShapeMismatch(format!(
                "mlp input of {} values is not a multiple of {}",
                x.len(),
                s.input
            )));
        }
        let rows = x.len() / s.input;
        let slope = T::c(self.slope);
        let mut inputs = Vec::new();
        let mut hidden: Vec<Vec<T>> = Vec::new();
        let mut h: Vec<T> = Vec::new();
        for l in 1..=s.layers + 1 {
            let (k, n) = if l <= s.layers {
                (s.layer_input(l), s.width)
            } else {
                (s.width, s.output)
            };
            let inp: Vec<T> = if l == 1 {
                x.to_vec()
            } else if l <= s.layers && s.skips.contains(&l) {
                let mut m = Vec::with_capacity(rows * k);
                for r in 0..rows {
                    m.extend_from_slice(&h[r * s.width..(r + 1) * s.width]);
                    m.extend_from_slice(&x[r * s.input..(r + 1) * s.input]);
                }
                m
            } else {
                std::mem::take(&mut h)
            };
            let bias = &params[self.b[l - 1].clone()];
            let mut z: Vec<T> = Vec::with_capacity(rows * n);
            for _ in 0..rows {
                z.extend_from_slice(bias);
            }
            gemm(false, false, rows, n, k, &inp, &params[self.w[l - 1].clone()], T::one(), &mut z);
            if l <= s.layers {
                z.iter_mut().for_each(|v| *v = leaky(*v, slope));
                if keep {
                    hidden.push(z.clone());
                }
                h = z;
            } else {
                if self.out_act == OutputActivation::Logistic {
                    z.iter_mut().for_each(|v| *v = sigmoid(*v));
                }
                h = z;
            }
            if keep {
                inputs.push(inp);
            }
        }
        Ok(MlpCache {
            rows,
            inputs,
            hidden,
            output: h,
        })
    }

    /// Backward from `dout` (`rows × output`). Accumulates into `grad` and
    /// returns `d input` (`rows × input`).
    pub fn backward<T: Real>(&self, params: &[T], cache: &MlpCache<T>, dout: &[T], grad: &mut [T]) -> Vec<T> {
        let s = &self.shape;
        let rows = cache.rows;
        assert_eq!(cache.inputs.len(), s.layers + 1, "forward must be run with keep = true");
        let slope = T::c(self.slope);
        let mut dz: Vec<T> = dout.to_vec();
        if self.out_act == OutputActivation::Logistic {
            for (d, &y) in dz.iter_mut().zip(&cache.output) {
                *d *= y * (T::one() - y);
            }
        }
        let mut dx = vec![T::zero(); rows * s.input];
        for l in (1..=s.layers + 1).rev() {
            let (k, n) = if l <= s.layers {
                (s.layer_input(l), s.width)
            } else {
                (s.width, s.output)
            };
            if l <= s.layers {
                for (d, &y) in dz.iter_mut().zip(&cache.hidden[l - 1]) {
                    if y <= T::zero() {
                        *d *= slope;
                    }
                }
            }
            let inp = &cache.inputs[l - 1];
            let wr = self.w[l - 1].clone();
            gemm(true, false, k, n, rows, inp, &dz, T::one(), &mut grad[wr.clone()]);
            let gb = &mut grad[self.b[l - 1].clone()];
            for row in dz.chunks(n) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            let mut din = vec![T::zero(); rows * k];
            gemm(false, true, rows, k, n, &dz, &params[wr], T::zero(), &mut din);
            if l == 1 {
                for (a, &b) in dx.iter_mut().zip(&din) {
                    *a += b;
                }
            } else if l <= s.layers && s.skips.contains(&l) {
                let mut dh = Vec::with_capacity(rows * s.width);
                for r in 0..rows {
                    let row = &din[r * k..(r + 1) * k];
                    dh.extend_from_slice(&row[..s.width]);
                    for (a, &b) in dx[r * s.input..(r + 1) * s.input].iter_mut().zip(&row[s.width..]) {
                        *a += b;
                    }
                }
                dz = dh;
            } else {
                dz = din;
            }
        }
        dx
    }
}
