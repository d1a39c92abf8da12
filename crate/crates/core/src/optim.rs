//! Quasi-Newton minimization with an Armijo backtracking line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings for [`crate::gp::optimize_hyper`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Total number of starts; the first one is the supplied initial point.
    pub restarts: usize,
    /// Seeds the log-uniform perturbations used for the extra starts.
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iter: 200,
            grad_tol: 1e-5,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// The objective stopped decreasing: either the line search failed or
    /// successive improvements fell to rounding level.
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 50;
const MAX_STEP: f64 = 2.0;
/// Accepted steps that improve f by less than this, relative to 1 + |f|,
/// count as no progress; a run of them ends the search as stalled.
const REL_FTOL: f64 = 1e-10;
const STALL_PATIENCE: usize = 3;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective`, which returns the value and gradient at a point.
///
/// The objective may fail (for example when a trial point makes a Gram
/// matrix unfactorizable); such points are treated as +∞ by the line search.
/// Failure at the starting point is returned to the caller.
pub fn minimize<F>(mut objective: F, x0: &[f64], max_iter: usize, grad_tol: f64) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = objective(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::OptimizationFailed(
            "objective is not finite at the initial point".into(),
        ));
    }
    let mut h = identity(n);
    let mut fresh_h = true;
    let mut iterations = 0;
    let mut idle = 0;

    let stop = loop {
        if inf_norm(&g) <= grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= max_iter {
            break StopReason::MaxIterations;
        }
        iterations += 1;

        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            fresh_h = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let longest = inf_norm(&d);
        let mut t = if longest > MAX_STEP { MAX_STEP / longest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            if let Ok((ft, gt)) = objective(&trial) {
                if ft.is_finite()
                    && gt.iter().all(|v| v.is_finite())
                    && ft <= fx + ARMIJO_C1 * t * slope
                {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= BACKTRACK;
        }

        match accepted {
            Some((x_new, f_new, g_new)) => {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if fresh_h {
                        // Scale the initial inverse Hessian to the observed curvature.
                        let scale = sy / dot(&y, &y);
                        h.iter_mut()
                            .flat_map(|r| r.iter_mut())
                            .for_each(|v| *v *= scale);
                        fresh_h = false;
                    }
                    bfgs_update(&mut h, &s, &y, sy);
                }
                idle = if fx - f_new <= REL_FTOL * (1.0 + fx.abs()) { idle + 1 } else { 0 };
                x = x_new;
                fx = f_new;
                g = g_new;
                if idle >= STALL_PATIENCE && inf_norm(&g) > grad_tol {
                    break StopReason::Stalled;
                }
            }
            None if !fresh_h => {
                h = identity(n);
                fresh_h = true;
            }
            None => break StopReason::Stalled,
        }
    };

    Ok(Minimum {
        grad_inf_norm: inf_norm(&g),
        x,
        value: fx,
        iterations,
        stop,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ with ρ = 1/(yᵀs).
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
