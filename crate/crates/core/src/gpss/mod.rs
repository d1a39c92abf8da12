//! Gaussian-process state-space models
//!
//! ```text
//! x_{k+1} = f(x_k, u_k) + w_k,    y_k = g(x_k) + ε_k
//! ```
//!
//! learned from fully observed state trajectories, either with one exact GP
//! per state dimension ([`fit_gpss_observed`]) or with a finite sinusoidal
//! basis expansion of f whose coefficients have a conjugate Gaussian
//! posterior ([`basis::fit_basis_gpss_observed`]). Learned models can be
//! simulated and run through a bootstrap particle filter on output data.

pub mod basis;
pub mod particle;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, GpFitOptions, GpSnapshot, HyperFit, TrainedGP};
use crate::numerics::Matrix;
use crate::synth;

pub use basis::{fit_basis_gpss_observed, make_sine_basis, spectral_density, BasisModel, BasisSnapshot, SineBasis};
pub use particle::{bootstrap_pf, systematic_resample, FilterOutput, ParticleSet, StatePrior};

/// States x_0..x_N with optional inputs u_0..u_{N-1} and outputs y_1..y_N.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    states: Matrix,
    inputs: Option<Vec<f64>>,
    outputs: Option<Vec<f64>>,
}

impl StateTrajectory {
    pub fn new(states: Matrix, inputs: Option<Vec<f64>>, outputs: Option<Vec<f64>>) -> Result<Self> {
        if states.rows() == 0 || states.cols() == 0 {
            return Err(Error::InvalidArgument("trajectory needs at least one state".into()));
        }
        let n = states.rows() - 1;
        for (what, v) in [("inputs", &inputs), ("outputs", &outputs)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{what} length {} does not match {n} transitions",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{what} contain non-finite values")));
                }
            }
        }
        if !states.is_finite() {
            return Err(Error::InvalidArgument("states contain non-finite values".into()));
        }
        Ok(StateTrajectory {
            states,
            inputs,
            outputs,
        })
    }

    /// Number of transitions N.
    pub fn len(&self) -> usize {
        self.states.rows() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.cols()
    }

    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn state(&self, k: usize) -> &[f64] {
        self.states.row(k)
    }

    pub fn inputs(&self) -> Option<&[f64]> {
        self.inputs.as_deref()
    }

    pub fn outputs(&self) -> Option<&[f64]> {
        self.outputs.as_deref()
    }

    /// Regressors (x_k, u_k) for k = 0..N-1.
    pub fn transition_inputs(&self) -> Matrix {
        let n = self.len();
        let d = self.state_dim();
        let extra = usize::from(self.inputs.is_some());
        Matrix::from_fn(n, d + extra, |k, j| {
            if j < d {
                self.states[(k, j)]
            } else {
                self.inputs.as_ref().map_or(0.0, |u| u[k])
            }
        })
    }

    /// Next-state values x_{k+1, dim} for k = 0..N-1.
    pub fn transition_targets(&self, dim: usize) -> Vec<f64> {
        (1..=self.len()).map(|k| self.states[(k, dim)]).collect()
    }
}

/// Measurement channel y = g(x) + ε.
#[derive(Clone, Debug)]
pub enum Measurement {
    None,
    /// g learned from observed (x_k, y_k) pairs.
    Gp(TrainedGP),
    /// Known linear map y = c·x.
    Linear(Vec<f64>),
}

/// Interface shared by every model that can be simulated or filtered.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;

    fn uses_input(&self) -> bool;

    /// Posterior mean of f(x, u) per state dimension and its latent
    /// (epistemic) variance, excluding process noise.
    fn dynamics(&self, x: &[f64], u: Option<f64>) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Diagonal of the process-noise covariance.
    fn process_noise_var(&self) -> Vec<f64>;

    /// Mean and latent variance of g(x), or `None` without a measurement channel.
    fn observe(&self, x: &[f64]) -> Option<Result<(f64, f64)>>;

    fn meas_noise_var(&self) -> Option<f64>;
}

fn observe_with(measurement: &Measurement, x: &[f64]) -> Option<Result<(f64, f64)>> {
    match measurement {
        Measurement::None => None,
        Measurement::Gp(g) => Some(g.predict_point(x)),
        Measurement::Linear(c) => Some(Ok((c.iter().zip(x).map(|(a, b)| a * b).sum(), 0.0))),
    }
}

/// Per-dimension GP dynamics learned from observed states.
#[derive(Clone, Debug)]
pub struct GpssModel {
    pub f_gps: Vec<TrainedGP>,
    pub measurement: Measurement,
    pub process_noise_var: Vec<f64>,
    pub meas_noise_var: Option<f64>,
    pub uses_input: bool,
}

impl GpssModel {
    /// Replaces the measurement channel with a known linear map.
    pub fn with_linear_measurement(mut self, c: Vec<f64>, noise_var: f64) -> Result<Self> {
        if c.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "GpssModel::with_linear_measurement",
                expected: self.state_dim(),
                found: c.len(),
            });
        }
        if !(noise_var > 0.0) {
            return Err(Error::InvalidArgument("measurement noise must be positive".into()));
        }
        self.measurement = Measurement::Linear(c);
        self.meas_noise_var = Some(noise_var);
        Ok(self)
    }

    pub fn snapshot(&self) -> GpssSnapshot {
        GpssSnapshot {
            f: self.f_gps.iter().map(TrainedGP::snapshot).collect(),
            g: match &self.measurement {
                Measurement::Gp(g) => Some(g.snapshot()),
                _ => None,
            },
            linear_measurement: match &self.measurement {
                Measurement::Linear(c) => Some(c.clone()),
                _ => None,
            },
            meas_noise_var: self.meas_noise_var,
            uses_input: self.uses_input,
        }
    }
}

impl StateSpaceModel for GpssModel {
    fn state_dim(&self) -> usize {
        self.f_gps.len()
    }

    fn uses_input(&self) -> bool {
        self.uses_input
    }

    fn dynamics(&self, x: &[f64], u: Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = regressor(x, u, self.uses_input)?;
        let mut mean = Vec::with_capacity(self.f_gps.len());
        let mut var = Vec::with_capacity(self.f_gps.len());
        for gp in &self.f_gps {
            let (m, v) = gp.predict_point(&z)?;
            mean.push(m);
            var.push(v);
        }
        Ok((mean, var))
    }

    fn process_noise_var(&self) -> Vec<f64> {
        self.process_noise_var.clone()
    }

    fn observe(&self, x: &[f64]) -> Option<Result<(f64, f64)>> {
        observe_with(&self.measurement, x)
    }

    fn meas_noise_var(&self) -> Option<f64> {
        self.meas_noise_var
    }
}

pub(crate) fn regressor(x: &[f64], u: Option<f64>, uses_input: bool) -> Result<Vec<f64>> {
    let mut z = x.to_vec();
    if uses_input {
        z.push(u.ok_or(Error::InsufficientHistory {
            what: "inputs",
            needed: 1,
            found: 0,
        })?);
    }
    Ok(z)
}

/// Serializable form of a [`GpssModel`]; every GP is refitted on restore.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpssSnapshot {
    pub f: Vec<GpSnapshot>,
    pub g: Option<GpSnapshot>,
    pub linear_measurement: Option<Vec<f64>>,
    pub meas_noise_var: Option<f64>,
    pub uses_input: bool,
}

impl GpssSnapshot {
    pub fn restore(&self) -> Result<GpssModel> {
        let f_gps = self.f.iter().map(GpSnapshot::restore).collect::<Result<Vec<_>>>()?;
        let process_noise_var = f_gps.iter().map(TrainedGP::noise_variance).collect();
        let measurement = match (&self.g, &self.linear_measurement) {
            (Some(g), _) => Measurement::Gp(g.restore()?),
            (None, Some(c)) => Measurement::Linear(c.clone()),
            (None, None) => Measurement::None,
        };
        Ok(GpssModel {
            f_gps,
            measurement,
            process_noise_var,
            meas_noise_var: self.meas_noise_var,
            uses_input: self.uses_input,
        })
    }
}

/// Fits f (one GP per state dimension, inputs (x_k, u_k), targets
/// x_{k+1,j}) and, when outputs are present, g (inputs x_k, targets y_k).
/// Process-noise variances are the learned noise variances of the f GPs.
pub fn fit_gpss_observed(
    traj: &StateTrajectory,
    options: &GpFitOptions,
) -> Result<(GpssModel, Vec<HyperFit>)> {
    let d = traj.state_dim();
    if traj.len() < d + 2 {
        return Err(Error::SequenceTooShort {
            needed: d + 1,
            found: traj.len(),
        });
    }
    let inputs = traj.transition_inputs();
    let mut reports = Vec::new();
    let mut f_gps = Vec::with_capacity(d);
    for j in 0..d {
        let (gp, report) = gp::fit_with_options(inputs.clone(), traj.transition_targets(j), options)?;
        reports.extend(report);
        f_gps.push(gp);
    }
    let process_noise_var = f_gps.iter().map(TrainedGP::noise_variance).collect();

    let (measurement, meas_noise_var) = match traj.outputs() {
        Some(y) => {
            let x = Matrix::from_fn(traj.len(), d, |k, j| traj.states()[(k + 1, j)]);
            let (g, report) = gp::fit_with_options(x, y.to_vec(), options)?;
            reports.extend(report);
            let noise = g.noise_variance();
            (Measurement::Gp(g), Some(noise))
        }
        None => (Measurement::None, None),
    };

    Ok((
        GpssModel {
            f_gps,
            measurement,
            process_noise_var,
            meas_noise_var,
            uses_input: traj.inputs().is_some(),
        },
        reports,
    ))
}

/// Linear-Gaussian state-space model, the special case with exact Kalman
/// filtering: x_{k+1} = A x_k + b u_k + w_k, y_k = c·x_k + ε_k.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianModel {
    pub transition: Matrix,
    pub input_gain: Option<Vec<f64>>,
    pub process_noise_var: Vec<f64>,
    pub measurement: Vec<f64>,
    pub meas_noise_var: f64,
}

impl StateSpaceModel for LinearGaussianModel {
    fn state_dim(&self) -> usize {
        self.transition.rows()
    }

    fn uses_input(&self) -> bool {
        self.input_gain.is_some()
    }

    fn dynamics(&self, x: &[f64], u: Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mean = self.transition.matvec(x)?;
        if let Some(b) = &self.input_gain {
            let u = regressor(&[], u, true)?[0];
            for (m, bi) in mean.iter_mut().zip(b) {
                *m += bi * u;
            }
        }
        Ok((mean, vec![0.0; self.state_dim()]))
    }

    fn process_noise_var(&self) -> Vec<f64> {
        self.process_noise_var.clone()
    }

    fn observe(&self, x: &[f64]) -> Option<Result<(f64, f64)>> {
        Some(Ok((self.measurement.iter().zip(x).map(|(a, b)| a * b).sum(), 0.0)))
    }

    fn meas_noise_var(&self) -> Option<f64> {
        Some(self.meas_noise_var)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "seed")]
pub enum SimMode {
    /// Propagate posterior means only.
    Mean,
    /// Add process and measurement noise drawn from the seeded stream.
    Sample(u64),
}

/// Simulates `horizon` steps from `x0`. Outputs are produced when the model
/// has a measurement channel.
pub fn simulate<M: StateSpaceModel + ?Sized>(
    model: &M,
    x0: &[f64],
    inputs: Option<&[f64]>,
    horizon: usize,
    mode: SimMode,
) -> Result<StateTrajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let d = model.state_dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            context: "simulate",
            expected: d,
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state must be finite".into()));
    }
    let inputs = if model.uses_input() {
        let u = inputs.unwrap_or(&[]);
        if u.len() < horizon {
            return Err(Error::InsufficientHistory {
                what: "inputs",
                needed: horizon,
                found: u.len(),
            });
        }
        Some(&u[..horizon])
    } else {
        None
    };
    let mut rng: Option<ChaCha8Rng> = match mode {
        SimMode::Mean => None,
        SimMode::Sample(seed) => Some(synth::rng(seed)),
    };
    let q = model.process_noise_var();
    let r = model.meas_noise_var().unwrap_or(0.0);

    let mut states = Vec::with_capacity((horizon + 1) * d);
    states.extend_from_slice(x0);
    let mut outputs = Vec::with_capacity(horizon);
    let mut has_outputs = true;
    let mut x = x0.to_vec();
    for k in 0..horizon {
        let (mut next, _) = model.dynamics(&x, inputs.map(|u| u[k]))?;
        if let Some(rng) = rng.as_mut() {
            for (v, qi) in next.iter_mut().zip(&q) {
                *v += qi.sqrt() * synth::normal(rng);
            }
        }
        match model.observe(&next) {
            Some(obs) => {
                let (mut y, _) = obs?;
                if let Some(rng) = rng.as_mut() {
                    y += r.sqrt() * synth::normal(rng);
                }
                outputs.push(y);
            }
            None => has_outputs = false,
        }
        states.extend_from_slice(&next);
        x = next;
    }
    StateTrajectory::new(
        Matrix::from_vec(horizon + 1, d, states)?,
        inputs.map(<[f64]>::to_vec),
        has_outputs.then_some(outputs),
    )
}
