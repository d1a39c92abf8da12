//! Bootstrap particle filter for evaluating learned state-space models on
//! output-only data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::StateSpaceModel;
use crate::error::{Error, Result};
use crate::synth;

/// Weighted particle cloud; weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Weighted mean and variance per state dimension.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.particles.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; d];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += w * v;
            }
        }
        let mut var = vec![0.0; d];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
                *s += w * (v - m) * (v - m);
            }
        }
        (mean, var)
    }
}

/// Independent Gaussian prior on the initial state x_0.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePrior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl StatePrior {
    /// Point mass at `x0`.
    pub fn exact(x0: &[f64]) -> Self {
        StatePrior {
            mean: x0.to_vec(),
            variance: vec![0.0; x0.len()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    /// Filtered means and variances of x_k for k = 1..N.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// Effective sample size after weighting at each step.
    pub ess: Vec<f64>,
    pub resampled: Vec<bool>,
}

/// Systematic resampling: one uniform offset, P evenly spaced pointers into
/// the cumulative weights. Returns ancestor indices.
pub fn systematic_resample(weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let p = weights.len();
    let mut out = Vec::with_capacity(p);
    if p == 0 {
        return out;
    }
    let step = 1.0 / p as f64;
    let mut pointer = rng.random::<f64>() * step;
    let mut cumulative = weights[0];
    let mut i = 0;
    for _ in 0..p {
        while pointer > cumulative && i + 1 < p {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
        pointer += step;
    }
    out
}

/// Propagate, weight, resample. Particles move through the model's
/// predictive distribution (latent variance plus process noise) and are
/// weighted by the predictive density of each output. Resampling happens
/// when the effective sample size drops below P/2.
pub fn bootstrap_pf<M: StateSpaceModel + ?Sized>(
    model: &M,
    y: &[f64],
    u: Option<&[f64]>,
    prior: &StatePrior,
    particles: usize,
    seed: u64,
) -> Result<FilterOutput> {
    if particles < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 particles, got {particles}")));
    }
    let d = model.state_dim();
    if prior.mean.len() != d || prior.variance.len() != d {
        return Err(Error::DimensionMismatch {
            context: "bootstrap_pf prior",
            expected: d,
            found: prior.mean.len(),
        });
    }
    if prior.variance.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("prior variances must be nonnegative".into()));
    }
    let r = model
        .meas_noise_var()
        .ok_or_else(|| Error::InvalidArgument("model has no measurement channel".into()))?;
    let u = if model.uses_input() {
        let u = u.unwrap_or(&[]);
        if u.len() < y.len() {
            return Err(Error::InsufficientHistory {
                what: "inputs",
                needed: y.len(),
                found: u.len(),
            });
        }
        Some(u)
    } else {
        None
    };

    let mut rng = synth::rng(seed);
    let mut set = ParticleSet {
        particles: (0..particles)
            .map(|_| {
                prior
                    .mean
                    .iter()
                    .zip(&prior.variance)
                    .map(|(m, v)| m + v.sqrt() * synth::normal(&mut rng))
                    .collect()
            })
            .collect(),
        weights: vec![1.0 / particles as f64; particles],
    };
    let q = model.process_noise_var();
    let mut out = FilterOutput {
        means: Vec::with_capacity(y.len()),
        variances: Vec::with_capacity(y.len()),
        log_likelihood: 0.0,
        ess: Vec::with_capacity(y.len()),
        resampled: Vec::with_capacity(y.len()),
    };
    let mut log_w = vec![0.0; particles];

    for (k, &yk) in y.iter().enumerate() {
        let uk = u.map(|u| u[k]);
        for (i, x) in set.particles.iter_mut().enumerate() {
            let (mean, latent) = model.dynamics(x, uk)?;
            for j in 0..d {
                let sd = (latent[j] + q[j]).sqrt();
                x[j] = mean[j] + sd * synth::normal(&mut rng);
            }
            let (gm, gv) = model
                .observe(x)
                .ok_or_else(|| Error::InvalidArgument("model has no measurement channel".into()))??;
            let var = gv + r;
            let e = yk - gm;
            log_w[i] = set.weights[i].ln() - 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + e * e / var);
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateWeights { step: k + 1 });
        }
        let total: f64 = log_w.iter().map(|lw| (lw - max).exp()).sum();
        out.log_likelihood += max + total.ln();
        for (w, lw) in set.weights.iter_mut().zip(&log_w) {
            *w = (lw - max).exp() / total;
        }

        let (m, v) = set.moments();
        out.means.push(m);
        out.variances.push(v);
        let ess = set.ess();
        out.ess.push(ess);
        let resample = ess < particles as f64 / 2.0;
        if resample {
            let ancestors = systematic_resample(&set.weights, &mut rng);
            set.particles = ancestors.iter().map(|&a| set.particles[a].clone()).collect();
            set.weights.fill(1.0 / particles as f64);
        }
        out.resampled.push(resample);
    }
    Ok(out)
}
