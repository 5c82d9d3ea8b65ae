//! Nearest-neighbour metrics between point sets.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{KdTree, Vec3};

/// Distance from every point of `queries` to its nearest neighbour in `tree`.
pub fn nearest_distances(queries: &[Vec3], tree: &KdTree) -> Vec<f64> {
    queries.par_iter().map(|q| tree.nearest(q).1.sqrt()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean nearest-neighbour distance `a → b` and `b → a`, scaled by `scale`
/// (e.g. centimetres per unit).
pub fn chamfer(a: &[Vec3], b: &[Vec3], scale: f64) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    Ok((
        scale * mean(&nearest_distances(a, &tb)),
        scale * mean(&nearest_distances(b, &ta)),
    ))
}

/// Harmonic mean of precision and recall from per-point distances.
pub fn fscore_from_distances(pred_to_gt: &[f64], gt_to_pred: &[f64], tau: f64) -> f64 {
    let frac = |d: &[f64]| d.iter().filter(|&&x| x <= tau).count() as f64 / d.len().max(1) as f64;
    let (p, r) = (frac(pred_to_gt), frac(gt_to_pred));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F-score at threshold `tau` (same units as the points).
pub fn fscore(pred: &[Vec3], gt: &[Vec3], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("f-score threshold {tau} must be > 0")));
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let (tp, tg) = (KdTree::new(pred), KdTree::new(gt));
    Ok(fscore_from_distances(&nearest_distances(pred, &tg), &nearest_distances(gt, &tp), tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vec3::new(r.random(), r.random(), r.random())).collect()
    }

    fn brute(a: &[Vec3], b: &[Vec3]) -> Vec<f64> {
        a.iter()
            .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .collect()
    }

    #[test]
    fn unit_arithmetic() {
        let (ab, ba) = chamfer(&[Vec3::zeros()], &[Vec3::new(0.01, 0.0, 0.0)], 100.0).unwrap();
        assert!((ab - 1.0).abs() < 1e-12 && (ba - 1.0).abs() < 1e-12);
        let a = cloud(50, 1);
        assert_eq!(chamfer(&a, &a, 100.0).unwrap(), (0.0, 0.0));
        assert_eq!(fscore(&a, &a, 1e-3).unwrap(), 1.0);
        let far: Vec<Vec3> = a.iter().map(|p| p + Vec3::new(10.0, 0.0, 0.0)).collect();
        assert_eq!(fscore(&a, &far, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn matches_brute_force() {
        let (a, b) = (cloud(500, 2), cloud(430, 3));
        let (ab, ba) = chamfer(&a, &b, 1.0).unwrap();
        let (da, db) = (brute(&a, &b), brute(&b, &a));
        assert!((ab - mean(&da)).abs() <= 1e-9 && (ba - mean(&db)).abs() <= 1e-9);
        for tau in [0.01, 0.03, 0.05] {
            let f = fscore(&a, &b, tau).unwrap();
            assert!((f - fscore_from_distances(&da, &db, tau)).abs() <= 1e-9);
        }
    }

    #[test]
    fn fscore_monotone_in_tau() {
        let (a, b) = (cloud(300, 4), cloud(300, 5));
        let mut last = 0.0;
        for k in 1..=10 {
            let f = fscore(&a, &b, 0.01 * k as f64).unwrap();
            assert!(f >= last && (0.0..=1.0).contains(&f));
            last = f;
        }
        assert!(fscore(&a, &b, 0.0).is_err());
    }
}
