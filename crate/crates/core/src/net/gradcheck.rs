use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Central-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-3;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central differences of `f` on `n_probes`
/// randomly chosen coordinates (all of them if fewer), in `f64`.
///
/// Returns the largest `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn gradient_check<F>(f: F, params: &[f64], analytic: &[f64], n_probes: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    gradient_check_with_step(f, params, analytic, n_probes, seed, FD_STEP)
}

/// [`gradient_check`] with an explicit step, for piecewise-linear nets where
/// wide steps cross activation kinks.
pub fn gradient_check_with_step<F>(f: F, params: &[f64], analytic: &[f64], n_probes: usize, seed: u64, step: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = if n_probes >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut v = sample(&mut rng, params.len(), n_probes).into_vec();
        v.sort_unstable();
        v
    };
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in idx {
        let orig = p[i];
        p[i] = orig + step;
        let fp = f(&p);
        p[i] = orig - step;
        let fm = f(&p);
        p[i] = orig;
        let num = (fp - fm) / (2.0 * step);
        let a = analytic[i];
        let err = (a - num).abs() / a.abs().max(num.abs()).max(REL_FLOOR);
        worst = worst.max(err);
    }
    worst
}
