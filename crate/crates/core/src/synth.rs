//! Seeded synthetic data for examples, tests and the `gen` command.
//!
//! Every generator draws from a `ChaCha8Rng` seeded with the caller's seed,
//! so outputs are reproducible across platforms.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gpss::StateTrajectory;
use crate::kernels::{Kernel, KernelFamily};
use crate::numerics::{cholesky, Matrix};
use crate::temporal::{discretize, matern_to_ss};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A one-dimensional regression sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub u: Option<Vec<f64>>,
    pub y: Vec<f64>,
}

/// Noisy observations of sin(t) at `n` points, one drawn uniformly from
/// each of `n` equal slices of [0, 2π].
pub fn sinusoid(n: usize, noise_std: f64, seed: u64) -> Series {
    let mut rng = rng(seed);
    let width = 2.0 * PI / n.max(1) as f64;
    let t: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.random::<f64>()) * width)
        .collect();
    let y = t.iter().map(|t| t.sin() + noise_std * normal(&mut rng)).collect();
    Series { t, u: None, y }
}

/// Amplitude-modulated pseudo-random step input: levels uniform in
/// [lo, hi], each held for 10 to 40 samples.
pub fn aprbs(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u = Vec::with_capacity(n);
    while u.len() < n {
        let level = rng.random_range(lo..=hi);
        let hold = rng.random_range(10..=40);
        u.extend(std::iter::repeat_n(level, hold.min(n - u.len())));
    }
    u
}

/// y_k = a·y_{k-1} + b·u_{k-1} + ε_k with y_0 = 0 and a step-rich input.
pub fn linear_arx(n: usize, a: f64, b: f64, noise_std: f64, seed: u64) -> Series {
    let mut rng = rng(seed);
    let u = aprbs(n, -1.2, 1.2, &mut rng);
    let mut y = Vec::with_capacity(n);
    for k in 0..n {
        let v = if k == 0 {
            0.0
        } else {
            a * y[k - 1] + b * u[k - 1] + noise_std * normal(&mut rng)
        };
        y.push(v);
    }
    Series {
        t: (0..n).map(|k| k as f64).collect(),
        u: Some(u),
        y,
    }
}

/// Forced logistic map y_k = r·y_{k-1}(1 − y_{k-1}) + 0.05·u_{k-1} + ε_k.
pub fn logistic_narx(n: usize, r: f64, noise_std: f64, seed: u64) -> Series {
    let mut rng = rng(seed);
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut y = Vec::with_capacity(n);
    for k in 0..n {
        let v = if k == 0 {
            0.5
        } else {
            let p = y[k - 1];
            r * p * (1.0 - p) + 0.05 * u[k - 1] + noise_std * normal(&mut rng)
        };
        y.push(v);
    }
    Series {
        t: (0..n).map(|k| k as f64).collect(),
        u: Some(u),
        y,
    }
}

/// Draw of a zero-mean GP at `n` sorted uniform times in [0, span], plus
/// observation noise. Matérn kernels are sampled exactly through their
/// state-space form; the squared exponential through a dense Cholesky
/// factor.
pub fn gp_draw(kernel: &Kernel, n: usize, span: f64, noise_std: f64, seed: u64) -> Result<Series> {
    let mut rng = rng(seed);
    let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..span)).collect();
    t.sort_by(f64::total_cmp);
    let f = latent_draw(kernel, &t, &mut rng)?;
    let y = f.iter().map(|f| f + noise_std * normal(&mut rng)).collect();
    Ok(Series { t, u: None, y })
}

/// Joint prior draw of a GP at sorted times.
pub fn latent_draw(kernel: &Kernel, times: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if kernel.family == KernelFamily::SquaredExponential {
        let z = Matrix::column(times);
        let k = kernel.gram_symmetric(&z);
        let jitter = 1e-9 * kernel.variance();
        let chol = cholesky(&k, &[jitter, 1e-7 * kernel.variance(), 1e-5 * kernel.variance()])?;
        let xi: Vec<f64> = (0..times.len()).map(|_| normal(rng)).collect();
        return chol.lower().matvec(&xi);
    }
    let sde = matern_to_ss(kernel)?;
    let d = sde.state_dim();
    let mut out = Vec::with_capacity(times.len());
    let mut x = vec![0.0; d];
    for (i, &ti) in times.iter().enumerate() {
        let (transition, cov) = if i == 0 {
            (Matrix::zeros(d, d), sde.stationary_cov.clone())
        } else {
            let step = discretize(&sde, ti - times[i - 1])?;
            (step.transition, step.process_cov)
        };
        let mean = transition.matvec(&x)?;
        let scale = 1e-12 * sde.stationary_cov.max_abs();
        let chol = cholesky(&cov, &[0.0, scale, 1e3 * scale])?;
        let xi: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let w = chol.lower().matvec(&xi)?;
        x = mean.iter().zip(&w).map(|(a, b)| a + b).collect();
        out.push(x[0]);
    }
    Ok(out)
}

/// Pendulum-like GPSS data: x_{k+1} = x_k + 0.1·sin(x_k) + gain·u_k + w_k,
/// y_k = x_k + ε_k, with x_0 = x0 and uniform inputs in [−1, 1] when
/// `gain` is nonzero.
pub fn pendulum(
    n: usize,
    x0: f64,
    gain: f64,
    process_std: f64,
    meas_std: f64,
    seed: u64,
) -> Result<StateTrajectory> {
    let mut rng = rng(seed);
    let with_input = gain != 0.0;
    let u: Vec<f64> = (0..n)
        .map(|_| if with_input { rng.random_range(-1.0..=1.0) } else { 0.0 })
        .collect();
    let mut x = vec![x0];
    for k in 0..n {
        let prev = x[k];
        x.push(prev + 0.1 * prev.sin() + gain * u[k] + process_std * normal(&mut rng));
    }
    let y: Vec<f64> = x[1..].iter().map(|x| x + meas_std * normal(&mut rng)).collect();
    StateTrajectory::new(
        Matrix::column(&x),
        with_input.then_some(u),
        Some(y),
    )
}

/// Validates a strictly positive generator parameter.
pub fn check_positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(sinusoid(10, 0.1, 4), sinusoid(10, 0.1, 4));
        assert_ne!(sinusoid(10, 0.1, 4), sinusoid(10, 0.1, 5));
        assert_eq!(linear_arx(50, 0.9, 0.5, 0.05, 1), linear_arx(50, 0.9, 0.5, 0.05, 1));
    }

    #[test]
    fn sinusoid_is_stratified() {
        let s = sinusoid(10, 0.0, 3);
        for (i, t) in s.t.iter().enumerate() {
            let lo = i as f64 * 2.0 * PI / 10.0;
            assert!(*t >= lo && *t < lo + 2.0 * PI / 10.0);
            assert_eq!(s.y[i], t.sin());
        }
    }

    #[test]
    fn arx_noiseless_recursion() {
        let s = linear_arx(30, 0.9, 0.5, 0.0, 9);
        let u = s.u.unwrap();
        for k in 1..30 {
            assert!((s.y[k] - (0.9 * s.y[k - 1] + 0.5 * u[k - 1])).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_draws() {
        assert!(sinusoid(0, 0.1, 1).t.is_empty());
        let k = Kernel::new(KernelFamily::Matern32, 1.0, 1.0).unwrap();
        assert!(gp_draw(&k, 0, 10.0, 0.1, 1).unwrap().y.is_empty());
    }

    #[test]
    fn pendulum_shapes() {
        let tr = pendulum(20, 0.5, 0.05, 0.01, 0.01, 2).unwrap();
        assert_eq!(tr.len(), 20);
        assert_eq!(tr.state_dim(), 1);
        assert!(tr.inputs().is_some() && tr.outputs().is_some());
    }
}
