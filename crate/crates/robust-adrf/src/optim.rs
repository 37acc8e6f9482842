//! Derivative-free minimization (Nelder-Mead simplex).

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop when the objective spread over the simplex is below this.
    pub f_tol: f64,
    /// ... and the simplex extent is below this.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { f_tol: 1e-8, x_tol: 1e-8, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with initial simplex offsets `step`. Infeasible points
/// should evaluate to `+inf`; the start must be feasible.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    opts: &NelderMeadOptions,
) -> Result<Minimum> {
    let d = x0.len();
    if d == 0 || step.len() != d {
        return Err(invalid("simplex start and step must have equal nonzero length"));
    }
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(invalid("starting point is infeasible"));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for j in 0..d {
        let mut x = x0.to_vec();
        x[j] += step[j];
        let mut v = f(&x);
        // Shrink the offset toward the start until it is feasible.
        let mut tries = 0;
        while !v.is_finite() && tries < 40 {
            x[j] = x0[j] + (x[j] - x0[j]) * 0.5;
            v = f(&x);
            tries += 1;
        }
        simplex.push((x, v));
    }
    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(by_value);
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let spread = (worst - best).abs();
        let extent = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol && extent <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> =
            (0..d).map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[d].0).map(|(&c, &w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[d].1 {
            let x = along(0.5);
            let v = f(&x);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = f(&x);
            (x, v)
        };
        if fc < fr.min(simplex[d].1) {
            simplex[d] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = entry.0.iter().zip(&x_best).map(|(&a, &b)| b + 0.5 * (a - b)).collect();
            let v = f(&x);
            *entry = (x, v);
        }
    }
    simplex.sort_by(by_value);
    let (x, value) = simplex.swap_remove(0);
    Ok(Minimum { x, value, iterations, converged })
}
