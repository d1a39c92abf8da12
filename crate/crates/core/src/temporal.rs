//! Linear-time temporal GP regression.
//!
//! A stationary Matérn process with half-integer smoothness ν is the first
//! component of a (ν + ½)-dimensional linear SDE
//!
//! ```text
//! dx/dt = A x + B η(t),   f(t) = C x(t),   E[η(t) η(t')] = q δ(t − t')
//! ```
//!
//! with A in companion form. Discretizing exactly between sample times and
//! running a Kalman filter followed by an RTS smoother gives the same
//! posterior as exact GP regression at O(N) cost.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{HyperVector, Kernel, KernelFamily};
use crate::numerics::{expm, solve_general, Matrix};
use crate::optim::{minimize, OptimConfig, StopReason};

/// Symmetric matrices may drift this far from symmetry before a pass is
/// considered broken; negative variances this small are clamped.
pub const PSD_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LtiSde {
    pub drift: Matrix,
    pub noise_input: Vec<f64>,
    pub measurement: Vec<f64>,
    pub spectral_density: f64,
    pub stationary_cov: Matrix,
}

impl LtiSde {
    pub fn state_dim(&self) -> usize {
        self.noise_input.len()
    }

    /// Residual of A·P∞ + P∞·Aᵀ + q·B·Bᵀ (max abs entry).
    pub fn lyapunov_residual(&self) -> f64 {
        let a = &self.drift;
        let p = &self.stationary_cov;
        let ap = a.matmul(p).expect("square");
        let pat = p.matmul(&a.transpose()).expect("square");
        let d = self.state_dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                let r = ap[(i, j)]
                    + pat[(i, j)]
                    + self.spectral_density * self.noise_input[i] * self.noise_input[j];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Stationary covariance C·P∞·expm(Aᵀτ)·Cᵀ at lag τ ≥ 0.
    pub fn covariance_at_lag(&self, tau: f64) -> Result<f64> {
        let phi_t = expm(&self.drift.scaled(tau))?.transpose();
        let m = self.stationary_cov.matmul(&phi_t)?;
        let c = &self.measurement;
        let mc = m.matvec(c)?;
        Ok(c.iter().zip(&mc).map(|(a, b)| a * b).sum())
    }
}

/// Companion-form state-space model of a half-integer Matérn kernel.
///
/// λ = √(2ν)/ℓ, the characteristic polynomial is (s + λ)^(ν+½), and
/// q = 2 s² √π λ^(2ν) Γ(ν + ½) / Γ(ν). P∞ is obtained by solving the
/// Lyapunov equation rather than from tabulated constants.
pub fn matern_to_ss(kernel: &Kernel) -> Result<LtiSde> {
    let nu = kernel
        .family
        .smoothness()
        .ok_or(Error::UnsupportedKernel(kernel.family))?;
    let dim = (nu + 0.5).round() as usize;
    let lambda = (2.0 * nu).sqrt() / kernel.lengthscale();

    let mut drift = Matrix::zeros(dim, dim);
    for i in 0..dim - 1 {
        drift[(i, i + 1)] = 1.0;
    }
    // Last row holds −binom(dim, k)·λ^(dim−k) for k = 0..dim−1.
    for k in 0..dim {
        drift[(dim - 1, k)] = -(binomial(dim, k) as f64) * lambda.powi((dim - k) as i32);
    }
    let mut noise_input = vec![0.0; dim];
    noise_input[dim - 1] = 1.0;
    let mut measurement = vec![0.0; dim];
    measurement[0] = 1.0;

    let spectral_density = 2.0
        * kernel.variance()
        * PI.sqrt()
        * lambda.powf(2.0 * nu)
        * gamma_half_integer(nu + 0.5)
        / gamma_half_integer(nu);

    let stationary_cov = solve_lyapunov(&drift, &noise_input, spectral_density)?;
    Ok(LtiSde {
        drift,
        noise_input,
        measurement,
        spectral_density,
        stationary_cov,
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Γ(x) for positive integer or half-integer x.
pub(crate) fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round() as i64;
    debug_assert!(twice >= 1 && (2.0 * x - twice as f64).abs() < 1e-12);
    let (mut value, mut at) = if twice % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while at + 0.5 < x {
        value *= at;
        at += 1.0;
    }
    value
}

/// Solves A·P + P·Aᵀ + q·B·Bᵀ = 0 through the Kronecker-form linear system.
fn solve_lyapunov(a: &Matrix, b: &[f64], q: f64) -> Result<Matrix> {
    let d = a.rows();
    let mut system = Matrix::zeros(d * d, d * d);
    let mut rhs = Matrix::zeros(d * d, 1);
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            for k in 0..d {
                system[(row, k * d + j)] += a[(i, k)];
                system[(row, i * d + k)] += a[(j, k)];
            }
            rhs[(row, 0)] = -q * b[i] * b[j];
        }
    }
    let vec_p = solve_general(&system, &rhs)?;
    let mut p = Matrix::from_vec(d, d, vec_p.into_vec())?;
    p.symmetrize();
    Ok(p)
}

/// Exact transition and process-noise covariance over one time gap.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteStep {
    pub transition: Matrix,
    pub process_cov: Matrix,
}

pub fn discretize(sde: &LtiSde, dt: f64) -> Result<DiscreteStep> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time step must be finite and nonnegative, got {dt}"
        )));
    }
    let d = sde.state_dim();
    if dt == 0.0 {
        return Ok(DiscreteStep {
            transition: Matrix::identity(d),
            process_cov: Matrix::zeros(d, d),
        });
    }
    let f = expm(&sde.drift.scaled(dt))?;
    let fpf = f.matmul(&sde.stationary_cov)?.matmul(&f.transpose())?;
    let mut q = sde.stationary_cov.sub(&fpf)?;
    q.symmetrize();
    Ok(DiscreteStep {
        transition: f,
        process_cov: q,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussState {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

/// Filtered and smoothed moments at every node of the merged time grid.
#[derive(Clone, Debug)]
pub struct SmootherRun {
    pub times: Vec<f64>,
    /// Index into the observation vector for nodes that carry one.
    pub observation: Vec<Option<usize>>,
    pub filtered: Vec<GaussState>,
    pub smoothed: Vec<GaussState>,
    /// Prediction-error-decomposition negative log-likelihood.
    pub nll: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalPosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub nll: f64,
}

fn check_times(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "kalman_regress",
            expected: times.len(),
            found: values.len(),
        });
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("times and observations must be finite".into()));
    }
    for w in times.windows(2) {
        if w[1] == w[0] {
            return Err(Error::DuplicateTimes(w[0]));
        }
        if w[1] < w[0] {
            return Err(Error::InvalidArgument("observation times must be sorted".into()));
        }
    }
    Ok(())
}

/// Merged sorted grid of observation and extra times. Returns the grid, the
/// observation index per node, and the node index of every extra time.
fn merge_grid(times: &[f64], extra: &[f64]) -> (Vec<f64>, Vec<Option<usize>>, Vec<usize>) {
    let mut order: Vec<usize> = (0..extra.len()).collect();
    order.sort_by(|&a, &b| extra[a].total_cmp(&extra[b]));

    let mut grid = Vec::with_capacity(times.len() + extra.len());
    let mut obs = Vec::with_capacity(times.len() + extra.len());
    let mut node_of = vec![0usize; extra.len()];
    let (mut i, mut j) = (0, 0);
    while i < times.len() || j < order.len() {
        let take_obs = j >= order.len() || (i < times.len() && times[i] <= extra[order[j]]);
        let t = if take_obs { times[i] } else { extra[order[j]] };
        if take_obs {
            grid.push(t);
            obs.push(Some(i));
            i += 1;
        } else if grid.last() != Some(&t) {
            grid.push(t);
            obs.push(None);
        }
        // Attach every extra time equal to the current node.
        while j < order.len() && extra[order[j]] == t && grid.last() == Some(&t) {
            node_of[order[j]] = grid.len() - 1;
            j += 1;
        }
    }
    (grid, obs, node_of)
}

fn clamp_psd(cov: &mut Matrix) -> Result<()> {
    cov.symmetrize();
    let scale = cov.max_abs().max(1.0);
    for i in 0..cov.rows() {
        let v = cov[(i, i)];
        if v < 0.0 {
            if v < -PSD_CLAMP * scale {
                return Err(Error::InternalConsistency(format!(
                    "state variance {v:e} became negative"
                )));
            }
            cov[(i, i)] = 0.0;
        }
    }
    Ok(())
}

/// Kalman filter and RTS smoother over the observations plus phantom
/// (update-free) nodes at `extra_times`.
pub fn run_smoother(
    sde: &LtiSde,
    times: &[f64],
    values: &[f64],
    noise_variance: f64,
    extra_times: &[f64],
) -> Result<(SmootherRun, Vec<usize>)> {
    check_times(times, values)?;
    if extra_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("test times must be finite".into()));
    }
    if !(noise_variance >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
    }
    let (grid, observation, node_of) = merge_grid(times, extra_times);
    let d = sde.state_dim();
    let n = grid.len();

    let mut filtered: Vec<GaussState> = Vec::with_capacity(n);
    let mut predicted: Vec<GaussState> = Vec::with_capacity(n);
    let mut transitions: Vec<Matrix> = Vec::with_capacity(n);
    let mut nll = 0.0;

    for k in 0..n {
        let (mut m, mut p, f) = if k == 0 {
            (vec![0.0; d], sde.stationary_cov.clone(), Matrix::identity(d))
        } else {
            let step = discretize(sde, grid[k] - grid[k - 1])?;
            let prev = &filtered[k - 1];
            let m = step.transition.matvec(&prev.mean)?;
            let mut p = step
                .transition
                .matmul(&prev.cov)?
                .matmul(&step.transition.transpose())?
                .add(&step.process_cov)?;
            clamp_psd(&mut p)?;
            (m, p, step.transition)
        };
        predicted.push(GaussState {
            mean: m.clone(),
            cov: p.clone(),
        });
        transitions.push(f);

        if let Some(idx) = observation[k] {
            let c = &sde.measurement;
            let pc = p.matvec(c)?;
            let s = c.iter().zip(&pc).map(|(a, b)| a * b).sum::<f64>() + noise_variance;
            if !(s > 0.0) {
                return Err(Error::NotPositiveDefinite { dim: 1 });
            }
            let v = values[idx] - c.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>();
            let gain: Vec<f64> = pc.iter().map(|x| x / s).collect();
            for i in 0..d {
                m[i] += gain[i] * v;
            }
            // Joseph form: (I − K C) P (I − K C)ᵀ + σ² K Kᵀ.
            let mut ikc = Matrix::identity(d);
            for i in 0..d {
                for j in 0..d {
                    ikc[(i, j)] -= gain[i] * c[j];
                }
            }
            p = ikc.matmul(&p)?.matmul(&ikc.transpose())?;
            for i in 0..d {
                for j in 0..d {
                    p[(i, j)] += noise_variance * gain[i] * gain[j];
                }
            }
            clamp_psd(&mut p)?;
            nll += 0.5 * ((2.0 * PI * s).ln() + v * v / s);
        }
        filtered.push(GaussState { mean: m, cov: p });
    }

    let mut smoothed = filtered.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        let next_pred = &predicted[k + 1];
        let f = &transitions[k + 1];
        let cur = &filtered[k];
        // G = P_k Fᵀ (P⁻_{k+1})⁻¹, computed as ((P⁻)⁻¹ F P_k)ᵀ.
        let gain = solve_general(&next_pred.cov, &f.matmul(&cur.cov)?)?.transpose();
        let dm: Vec<f64> = smoothed[k + 1]
            .mean
            .iter()
            .zip(&next_pred.mean)
            .map(|(a, b)| a - b)
            .collect();
        let gdm = gain.matvec(&dm)?;
        let mean: Vec<f64> = cur.mean.iter().zip(&gdm).map(|(a, b)| a + b).collect();
        let dp = smoothed[k + 1].cov.sub(&next_pred.cov)?;
        let mut cov = cur.cov.add(&gain.matmul(&dp)?.matmul(&gain.transpose())?)?;
        clamp_psd(&mut cov)?;
        smoothed[k] = GaussState { mean, cov };
    }

    Ok((
        SmootherRun {
            times: grid,
            observation,
            filtered,
            smoothed,
            nll,
        },
        node_of,
    ))
}

/// Temporal GP regression with a Matérn kernel in O((N + M)·d³).
///
/// Returns the latent posterior mean and variance at `test_times` and the
/// negative log marginal likelihood of the observations.
pub fn kalman_regress(
    kernel: &Kernel,
    times: &[f64],
    values: &[f64],
    noise_variance: f64,
    test_times: &[f64],
) -> Result<TemporalPosterior> {
    let sde = matern_to_ss(kernel)?;
    let (run, node_of) = run_smoother(&sde, times, values, noise_variance, test_times)?;
    let c = &sde.measurement;
    let mut mean = Vec::with_capacity(test_times.len());
    let mut variance = Vec::with_capacity(test_times.len());
    for &node in &node_of {
        let st = &run.smoothed[node];
        mean.push(c.iter().zip(&st.mean).map(|(a, b)| a * b).sum());
        let pc = st.cov.matvec(c)?;
        let v: f64 = c.iter().zip(&pc).map(|(a, b)| a * b).sum();
        variance.push(v.max(0.0));
    }
    Ok(TemporalPosterior {
        mean,
        variance,
        nll: run.nll,
    })
}

/// Negative log marginal likelihood through the Kalman filter alone.
pub fn temporal_nll(kernel: &Kernel, times: &[f64], values: &[f64], noise_variance: f64) -> Result<f64> {
    let sde = matern_to_ss(kernel)?;
    Ok(run_smoother(&sde, times, values, noise_variance, &[])?.0.nll)
}

const FD_STEP: f64 = 1e-5;

/// Maximum-likelihood hyperparameters for the temporal model, using the
/// O(N) likelihood with a central-difference gradient. Single start.
pub fn optimize_hyper_temporal(
    family: KernelFamily,
    times: &[f64],
    values: &[f64],
    init: HyperVector,
    config: &OptimConfig,
) -> Result<(HyperVector, f64, usize, StopReason)> {
    if family.smoothness().is_none() {
        return Err(Error::UnsupportedKernel(family));
    }
    let eval = |x: &[f64]| -> Result<f64> {
        if x.iter().any(|v| !v.is_finite() || v.abs() > 40.0) {
            return Err(Error::InvalidArgument("log-hyperparameters out of range".into()));
        }
        let h = HyperVector([x[0], x[1], x[2]]);
        temporal_nll(&h.kernel(family)?, times, values, h.noise_variance())
    };
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let value = eval(x)?;
        let mut grad = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += FD_STEP;
            down[i] -= FD_STEP;
            grad[i] = (eval(&up)? - eval(&down)?) / (2.0 * FD_STEP);
        }
        Ok((value, grad))
    };
    // Finite differences cannot resolve gradients far below the step's accuracy.
    let tol = config.grad_tol.max(1e-6);
    let m = minimize(objective, &init.0, config.max_iter, tol)?;
    Ok((HyperVector([m.x[0], m.x[1], m.x[2]]), m.value, m.iterations, m.stop))
}

/// A fitted temporal GP: Matérn kernel, noise and the observed series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalGp {
    pub kernel: Kernel,
    pub noise_variance: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TemporalGp {
    pub fn new(kernel: Kernel, noise_variance: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if kernel.family.smoothness().is_none() {
            return Err(Error::UnsupportedKernel(kernel.family));
        }
        check_times(&times, &values)?;
        Ok(TemporalGp {
            kernel,
            noise_variance,
            times,
            values,
        })
    }

    pub fn predict(&self, test_times: &[f64]) -> Result<TemporalPosterior> {
        kalman_regress(&self.kernel, &self.times, &self.values, self.noise_variance, test_times)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kern(family: KernelFamily, s: f64, l: f64) -> Kernel {
        Kernel::new(family, s, l).unwrap()
    }

    #[test]
    fn matern12_is_scalar_ou() {
        let sde = matern_to_ss(&kern(KernelFamily::Matern12, 1.7, 0.4)).unwrap();
        assert_eq!(sde.state_dim(), 1);
        assert!((sde.drift[(0, 0)] + 1.0 / 0.4).abs() < 1e-14);
        assert_eq!(sde.measurement, vec![1.0]);
        assert!((sde.stationary_cov[(0, 0)] - 1.7 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn zero_lag_variance_is_s_squared() {
        for family in KernelFamily::MATERN {
            let sde = matern_to_ss(&kern(family, 0.6, 2.3)).unwrap();
            assert!((sde.covariance_at_lag(0.0).unwrap() - 0.36).abs() < 1e-9);
            assert!(sde.lyapunov_residual() < 1e-9);
        }
    }

    #[test]
    fn squared_exponential_rejected() {
        let k = kern(KernelFamily::SquaredExponential, 1.0, 1.0);
        assert_eq!(
            matern_to_ss(&k).unwrap_err(),
            Error::UnsupportedKernel(KernelFamily::SquaredExponential)
        );
        assert!(kalman_regress(&k, &[0.0], &[1.0], 0.1, &[0.0]).is_err());
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_half_integer(0.5) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half_integer(1.0) - 1.0).abs() < 1e-15);
        assert!((gamma_half_integer(2.5) - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert!((gamma_half_integer(4.0) - 6.0).abs() < 1e-13);
    }

    #[test]
    fn discretize_zero_step() {
        let sde = matern_to_ss(&kern(KernelFamily::Matern52, 1.0, 1.0)).unwrap();
        let step = discretize(&sde, 0.0).unwrap();
        assert_eq!(step.transition, Matrix::identity(3));
        assert_eq!(step.process_cov, Matrix::zeros(3, 3));
        assert!(discretize(&sde, -1.0).is_err());
    }

    #[test]
    fn discretize_long_step_forgets() {
        for family in KernelFamily::MATERN {
            let l = 0.7;
            let sde = matern_to_ss(&kern(family, 1.3, l)).unwrap();
            let step = discretize(&sde, 50.0 * l).unwrap();
            assert!(step.transition.max_abs() < 1e-8, "{family}");
            let diff = step.process_cov.sub(&sde.stationary_cov).unwrap().max_abs();
            assert!(diff < 1e-8, "{family}: {diff}");
        }
    }

    #[test]
    fn discretize_ou_closed_form() {
        let (s, l, dt) = (1.4, 0.8, 0.3);
        let sde = matern_to_ss(&kern(KernelFamily::Matern12, s, l)).unwrap();
        let step = discretize(&sde, dt).unwrap();
        assert!((step.transition[(0, 0)] - (-dt / l).exp()).abs() < 1e-14);
        let q = s * s * (1.0 - (-2.0 * dt / l).exp());
        assert!((step.process_cov[(0, 0)] - q).abs() < 1e-13);
    }

    #[test]
    fn no_observations_gives_prior() {
        let k = kern(KernelFamily::Matern32, 1.2, 1.0);
        let post = kalman_regress(&k, &[], &[], 0.1, &[-3.0, 0.0, 7.5]).unwrap();
        assert_eq!(post.mean, vec![0.0; 3]);
        for v in post.variance {
            assert!((v - 1.44).abs() < 1e-12);
        }
        assert_eq!(post.nll, 0.0);
    }

    #[test]
    fn single_observation_matches_scalar_formula() {
        let (s, noise, y) = (1.3, 0.2, 0.9);
        let k = kern(KernelFamily::Matern12, s, 0.5);
        let post = kalman_regress(&k, &[2.0], &[y], noise, &[2.0]).unwrap();
        assert!((post.mean[0] - s * s * y / (s * s + noise)).abs() < 1e-14);
    }

    #[test]
    fn duplicate_times_rejected() {
        let k = kern(KernelFamily::Matern12, 1.0, 1.0);
        assert_eq!(
            kalman_regress(&k, &[0.0, 1.0, 1.0], &[0.0; 3], 0.1, &[]).unwrap_err(),
            Error::DuplicateTimes(1.0)
        );
        assert!(kalman_regress(&k, &[1.0, 0.0], &[0.0; 2], 0.1, &[]).is_err());
    }

    #[test]
    fn unsorted_and_repeated_test_times() {
        let k = kern(KernelFamily::Matern32, 1.0, 1.0);
        let times = [0.0, 1.0, 2.0];
        let y = [0.5, -0.2, 0.3];
        let a = kalman_regress(&k, &times, &y, 0.1, &[1.5, 0.5, 1.5, 1.0]).unwrap();
        let b = kalman_regress(&k, &times, &y, 0.1, &[0.5, 1.0, 1.5]).unwrap();
        assert_eq!(a.mean[0], a.mean[2]);
        assert!((a.mean[0] - b.mean[2]).abs() < 1e-14);
        assert!((a.mean[1] - b.mean[0]).abs() < 1e-14);
        assert!((a.mean[3] - b.mean[1]).abs() < 1e-14);
    }

    #[test]
    fn merge_grid_bookkeeping() {
        let (grid, obs, node_of) = merge_grid(&[1.0, 2.0], &[2.0, 0.5, 3.0, 0.5]);
        assert_eq!(grid, vec![0.5, 1.0, 2.0, 3.0]);
        assert_eq!(obs, vec![None, Some(0), Some(1), None]);
        assert_eq!(node_of, vec![2, 0, 3, 0]);
    }
}
