//! Derivative-free Nelder–Mead simplex minimization (standard coefficients:
//! reflection 1, expansion 2, contraction ½, shrink ½).

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge
/// `step[i]`. Stops after `max_iter` iterations or when the spread of simplex
/// values falls below `ftol`.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: &[f64], max_iter: usize, ftol: f64) -> Minimum {
    let n = x0.len();
    assert_eq!(step.len(), n);
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect() };

    let mut iterations = 0;
    while iterations < max_iter {
        // stable sort keeps ties in insertion order → deterministic
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if vals[n] - vals[0] <= ftol {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = lerp(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < vals[0] {
            let expanded = lerp(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                vals[n] = fe;
            } else {
                simplex[n] = reflected;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            simplex[n] = reflected;
            vals[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < vals[n] {
            let c = lerp(&centroid, &reflected, 0.5);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = lerp(&centroid, &worst, 0.5);
            let fc = f(&c);
            (c, fc)
        };
        if fc < vals[n].min(fr) {
            simplex[n] = contracted;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            simplex[i] = lerp(&simplex[0], &simplex[i], 0.5);
            vals[i] = f(&simplex[i]);
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Minimum {
        x: simplex[best].clone(),
        value: vals[best],
        iterations,
    }
}
