use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step applied only to the listed `(range, lr)`
/// groups; everything else (and its moments) is left untouched.
pub fn adam_step(params: &mut [f32], grads: &[f32], state: &mut AdamState, groups: &[(Range<usize>, f64)]) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (r, _) in groups {
        if grads[r.clone()].iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (r, lr) in groups {
        for i in r.clone() {
            let g = grads[i] as f64;
            let m = BETA1 * state.m[i] as f64 + (1.0 - BETA1) * g;
            let v = BETA2 * state.v[i] as f64 + (1.0 - BETA2) * g * g;
            state.m[i] = m as f32;
            state.v[i] = v as f32;
            let step = lr * (m / bc1) / ((v / bc2).sqrt() + EPS);
            params[i] = (params[i] as f64 - step) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0f32, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &[(0..2, 0.1)]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn quadratic_matches_reference_simulation() {
        // independent textbook Adam on f(w) = w², lr 0.1, from w = 1
        let (mut w_ref, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut w = vec![1.0f32];
        let mut s = AdamState::new(1);
        let mut first_overshoot = None;
        for t in 1..=50 {
            let g = 2.0 * w_ref;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let next = w_ref - 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            if next.abs() >= w_ref.abs() && first_overshoot.is_none() {
                first_overshoot = Some(t);
            }
            w_ref = next;
            let g = 2.0 * w[0];
            adam_step(&mut w, &[g], &mut s, &[(0..1, 0.1)]).unwrap();
            assert!((w[0] as f64 - w_ref).abs() < 1e-4, "step {t}: {} vs {w_ref}", w[0]);
        }
        // momentum carries w past the minimum: |w| shrinks for 11 steps only
        assert_eq!(first_overshoot, Some(12));
        assert!(w_ref.abs() < 0.1);
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut w = vec![1.0f32, -0.5];
            let mut s = AdamState::new(2);
            for _ in 0..20 {
                let g = [2.0 * w[0], 0.3 * w[1]];
                adam_step(&mut w, &g, &mut s, &[(0..2, 0.05)]).unwrap();
            }
            (w, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_gradient_is_error() {
        let mut p = vec![0.0f32];
        let mut s = AdamState::new(1);
        let e = adam_step(&mut p, &[f32::NAN], &mut s, &[(0..1, 0.1)]).unwrap_err();
        assert_eq!(e.to_string(), "non-finite gradient");
    }

    #[test]
    fn frozen_ranges_untouched() {
        let mut p = vec![1.0f32; 4];
        let mut s = AdamState::new(4);
        adam_step(&mut p, &[1.0; 4], &mut s, &[(0..2, 0.1), (2..3, 0.0)]).unwrap();
        assert!(p[0] < 1.0 && p[1] < 1.0);
        assert_eq!(&p[2..], &[1.0, 1.0]);
        assert_eq!(s.m[3], 0.0);
    }
}
