//! Exact Gaussian process regression.
//!
//! A [`TrainedGP`] stores the Cholesky factor of `K + σ_n²I` and the weight
//! vector `α = (K + σ_n²I)⁻¹ (y − m(Z))`; predictions reuse both. The
//! negative log marginal likelihood and its gradient with respect to
//! `(log s, log ℓ, log σ_n)` drive [`optimize_hyper`].

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{HyperVector, Kernel, KernelFamily};
use crate::numerics::{cholesky_default, dot, logdet, CholeskyFactor, Matrix};
use crate::optim::{minimize, OptimConfig, StopReason};

/// Negative posterior variances smaller than this fraction of s² are rounding noise.
pub const VARIANCE_CLAMP_REL: f64 = 1e-9;

/// Log-hyperparameters beyond this magnitude are rejected during optimization.
pub const LOG_HYPER_LIMIT: f64 = 40.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    targets: Vec<f64>,
    noise_variance: f64,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidArgument("dataset must have at least one row".into()));
        }
        if inputs.rows() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "Dataset::new",
                expected: inputs.rows(),
                found: targets.len(),
            });
        }
        if !inputs.is_finite() || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be finite and nonnegative, got {noise_variance}"
            )));
        }
        Ok(Dataset {
            inputs,
            targets,
            noise_variance,
        })
    }

    /// One-dimensional inputs.
    pub fn from_scalar(inputs: &[f64], targets: Vec<f64>, noise_variance: f64) -> Result<Self> {
        Dataset::new(Matrix::column(inputs), targets, noise_variance)
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        Dataset::new(self.inputs.clone(), self.targets.clone(), noise_variance)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum MeanFunction {
    #[default]
    Zero,
    Constant(f64),
}

impl MeanFunction {
    pub fn eval(&self, _z: &[f64]) -> f64 {
        match *self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => c,
        }
    }

    fn residuals(&self, inputs: &Matrix, targets: &[f64]) -> Vec<f64> {
        targets
            .iter()
            .enumerate()
            .map(|(i, y)| y - self.eval(inputs.row(i)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Covariance {
    Full(Matrix),
    Diagonal(Vec<f64>),
}

/// Posterior of the latent function at a set of test inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
    /// σ_n² of the model that produced this posterior.
    pub noise_variance: f64,
}

impl Posterior {
    /// Marginal variances of the latent function.
    pub fn variances(&self) -> Vec<f64> {
        match &self.covariance {
            Covariance::Full(m) => m.diag(),
            Covariance::Diagonal(v) => v.clone(),
        }
    }

    /// Marginal variances of a new noisy observation (latent + σ_n²).
    pub fn observation_variances(&self) -> Vec<f64> {
        self.variances()
            .into_iter()
            .map(|v| v + self.noise_variance)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Hyperparameters and training data: enough to rebuild a [`TrainedGP`]
/// bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub kernel: Kernel,
    pub mean: MeanFunction,
    pub noise_variance: f64,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl GpSnapshot {
    pub fn restore(&self) -> Result<TrainedGP> {
        let dataset = Dataset::new(
            Matrix::from_rows(&self.inputs)?,
            self.targets.clone(),
            self.noise_variance,
        )?;
        TrainedGP::fit(&dataset, self.kernel, self.mean)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedGP {
    kernel: Kernel,
    mean: MeanFunction,
    train_inputs: Matrix,
    train_targets: Vec<f64>,
    chol: CholeskyFactor,
    alpha: Vec<f64>,
    noise_variance: f64,
}

impl TrainedGP {
    /// Conditions the prior on `dataset`. Cost O(N³).
    pub fn fit(dataset: &Dataset, kernel: Kernel, mean: MeanFunction) -> Result<Self> {
        let mut k = kernel.gram_symmetric(dataset.inputs());
        k.add_diagonal(dataset.noise_variance());
        let chol = cholesky_default(&k)?;
        let residuals = mean.residuals(dataset.inputs(), dataset.targets());
        let alpha = chol.solve_vec(&residuals)?;
        Ok(TrainedGP {
            kernel,
            mean,
            train_inputs: dataset.inputs().clone(),
            train_targets: dataset.targets().to_vec(),
            chol,
            alpha,
            noise_variance: dataset.noise_variance(),
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mean_function(&self) -> MeanFunction {
        self.mean
    }

    pub fn train_inputs(&self) -> &Matrix {
        &self.train_inputs
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.train_targets
    }

    pub fn chol(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn input_dim(&self) -> usize {
        self.train_inputs.cols()
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn hyper(&self) -> HyperVector {
        self.kernel.with_noise(self.noise_variance.sqrt())
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            kernel: self.kernel,
            mean: self.mean,
            noise_variance: self.noise_variance,
            inputs: (0..self.train_inputs.rows())
                .map(|i| self.train_inputs.row(i).to_vec())
                .collect(),
            targets: self.train_targets.clone(),
        }
    }

    /// Latent posterior at the rows of `test_inputs`.
    pub fn predict(&self, test_inputs: &Matrix, full_cov: bool) -> Result<Posterior> {
        if test_inputs.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "TrainedGP::predict",
                expected: self.input_dim(),
                found: test_inputs.cols(),
            });
        }
        let m = test_inputs.rows();
        let cross = self.kernel.gram(test_inputs, &self.train_inputs)?;
        let mean: Vec<f64> = (0..m)
            .map(|i| self.mean.eval(test_inputs.row(i)) + dot(cross.row(i), &self.alpha))
            .collect();

        // Row i of `v` is L⁻¹ k(z*_i, Z).
        let mut v = cross;
        for i in 0..m {
            self.chol.solve_lower_in_place(v.row_mut(i));
        }
        let s2 = self.kernel.variance();
        let covariance = if full_cov {
            let prior = self.kernel.gram_symmetric(test_inputs);
            let mut cov = Matrix::zeros(m, m);
            for i in 0..m {
                for j in 0..=i {
                    let c = prior[(i, j)] - dot(v.row(i), v.row(j));
                    cov[(i, j)] = c;
                    cov[(j, i)] = c;
                }
                cov[(i, i)] = clamp_variance(cov[(i, i)], s2)?;
            }
            Covariance::Full(cov)
        } else {
            let vars = (0..m)
                .map(|i| clamp_variance(s2 - dot(v.row(i), v.row(i)), s2))
                .collect::<Result<Vec<_>>>()?;
            Covariance::Diagonal(vars)
        };
        Ok(Posterior {
            mean,
            covariance,
            noise_variance: self.noise_variance,
        })
    }

    /// Mean and latent variance at a single input.
    pub fn predict_point(&self, z: &[f64]) -> Result<(f64, f64)> {
        let p = self.predict(&Matrix::from_vec(1, z.len(), z.to_vec())?, false)?;
        Ok((p.mean[0], p.variances()[0]))
    }
}

fn clamp_variance(v: f64, prior_variance: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -VARIANCE_CLAMP_REL * prior_variance {
        Ok(0.0)
    } else {
        Err(Error::InternalConsistency(format!(
            "posterior variance {v:e} is negative beyond rounding (prior {prior_variance:e})"
        )))
    }
}

pub fn fit(dataset: &Dataset, kernel: Kernel, mean: MeanFunction) -> Result<TrainedGP> {
    TrainedGP::fit(dataset, kernel, mean)
}

pub fn predict(gp: &TrainedGP, test_inputs: &Matrix, full_cov: bool) -> Result<Posterior> {
    gp.predict(test_inputs, full_cov)
}

/// Negative log marginal likelihood of `dataset` and its gradient with
/// respect to (log s, log ℓ, log σ_n).
pub fn nll(dataset: &Dataset, kernel: Kernel, mean: MeanFunction) -> Result<(f64, [f64; 3])> {
    let n = dataset.len();
    let z = dataset.inputs();
    let mut k = kernel.gram_symmetric(z);
    k.add_diagonal(dataset.noise_variance());
    let chol = cholesky_default(&k)?;
    let r = mean.residuals(z, dataset.targets());
    let alpha = chol.solve_vec(&r)?;
    let value = 0.5 * (n as f64 * (2.0 * PI).ln() + logdet(&chol)) + 0.5 * dot(&r, &alpha);

    // ∂/∂θ = ½ tr(K⁻¹ ∂K) − ½ αᵀ ∂K α, with K⁻¹ and ∂K symmetric.
    let k_inv = chol.inverse();
    let [d_mag, d_len] = kernel.grad_log_hyper(z, z)?;
    let component = |dk: &Matrix| {
        let mut trace = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            trace += dot(k_inv.row(i), dk.row(i));
            quad += alpha[i] * dot(dk.row(i), &alpha);
        }
        0.5 * (trace - quad)
    };
    let g_noise = dataset.noise_variance() * (k_inv.trace() - dot(&alpha, &alpha));
    Ok((value, [component(&d_mag), component(&d_len), g_noise]))
}

/// [`nll`] with all three hyperparameters taken from `hyper`.
pub fn nll_at(
    dataset: &Dataset,
    family: KernelFamily,
    mean: MeanFunction,
    hyper: &HyperVector,
) -> Result<(f64, [f64; 3])> {
    if hyper.0.iter().any(|v| !v.is_finite() || v.abs() > LOG_HYPER_LIMIT) {
        return Err(Error::InvalidArgument(format!(
            "log-hyperparameters out of range: {:?}",
            hyper.0
        )));
    }
    let data = dataset.with_noise_variance(hyper.noise_variance())?;
    nll(&data, hyper.kernel(family)?, mean)
}

/// Result of marginal-likelihood optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperFit {
    pub family: KernelFamily,
    pub hyper: HyperVector,
    pub nll: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Starts whose initial point could be evaluated.
    pub starts_succeeded: usize,
}

impl HyperFit {
    pub fn kernel(&self) -> Result<Kernel> {
        self.hyper.kernel(self.family)
    }

    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise_variance()
    }
}

/// Minimizes the negative log marginal likelihood over (log s, log ℓ, log σ_n).
///
/// The first start is `init`; each further start perturbs every coordinate
/// of `init` by a uniform draw in [−1, 1]. The best local minimum wins;
/// starts that fail at their initial point are skipped.
pub fn optimize_hyper(
    dataset: &Dataset,
    family: KernelFamily,
    mean: MeanFunction,
    init: HyperVector,
    config: &OptimConfig,
) -> Result<HyperFit> {
    if !init.is_finite() {
        return Err(Error::InvalidArgument("initial hyperparameters must be finite".into()));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<HyperVector> = (0..config.restarts.max(1))
        .map(|r| {
            if r == 0 {
                init
            } else {
                let mut h = init;
                for v in h.0.iter_mut() {
                    *v += rng.random_range(-1.0..=1.0);
                }
                h
            }
        })
        .collect();

    let mut best: Option<HyperFit> = None;
    let mut succeeded = 0;
    let mut last_err = None;
    for start in starts {
        let objective = |x: &[f64]| {
            let h = HyperVector([x[0], x[1], x[2]]);
            nll_at(dataset, family, mean, &h).map(|(v, g)| (v, g.to_vec()))
        };
        match minimize(objective, &start.0, config.max_iter, config.grad_tol) {
            Ok(m) => {
                succeeded += 1;
                let candidate = HyperFit {
                    family,
                    hyper: HyperVector([m.x[0], m.x[1], m.x[2]]),
                    nll: m.value,
                    grad_inf_norm: m.grad_inf_norm,
                    iterations: m.iterations,
                    stop: m.stop,
                    starts_succeeded: 0,
                };
                if best.as_ref().is_none_or(|b| candidate.nll < b.nll) {
                    best = Some(candidate);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(mut fit) => {
            fit.starts_succeeded = succeeded;
            Ok(fit)
        }
        None => Err(last_err.unwrap_or_else(|| Error::OptimizationFailed("no starts".into()))),
    }
}

/// Data-driven starting point: s from the residual spread, ℓ from the
/// input spread, σ_n a tenth of s.
pub fn initial_hyper(dataset: &Dataset, mean: MeanFunction) -> HyperVector {
    let r = mean.residuals(dataset.inputs(), dataset.targets());
    let s = positive_or_one(std_dev(&r));
    let z = dataset.inputs();
    let spreads: Vec<f64> = (0..z.cols()).map(|j| std_dev(&z.col(j))).collect();
    let l = positive_or_one(spreads.iter().sum::<f64>() / spreads.len().max(1) as f64);
    HyperVector::from_natural(s, l, 0.1 * s)
}

fn positive_or_one(v: f64) -> f64 {
    if v > 1e-12 && v.is_finite() {
        v
    } else {
        1.0
    }
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// How a GP's hyperparameters are obtained when fitting a larger model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpFitOptions {
    pub family: KernelFamily,
    pub mean: MeanFunction,
    /// Starting (or, without an optimizer, fixed) hyperparameters; `None`
    /// uses [`initial_hyper`].
    pub init: Option<HyperVector>,
    /// `None` keeps the initial hyperparameters as they are.
    pub optimizer: Option<OptimConfig>,
}

impl GpFitOptions {
    pub fn optimized(family: KernelFamily) -> Self {
        GpFitOptions {
            family,
            mean: MeanFunction::Zero,
            init: None,
            optimizer: Some(OptimConfig::default()),
        }
    }

    pub fn fixed(family: KernelFamily, hyper: HyperVector) -> Self {
        GpFitOptions {
            family,
            mean: MeanFunction::Zero,
            init: Some(hyper),
            optimizer: None,
        }
    }

    pub fn with_mean(mut self, mean: MeanFunction) -> Self {
        self.mean = mean;
        self
    }
}

/// Fits a GP to (inputs, targets), optimizing hyperparameters if requested.
pub fn fit_with_options(
    inputs: Matrix,
    targets: Vec<f64>,
    options: &GpFitOptions,
) -> Result<(TrainedGP, Option<HyperFit>)> {
    let provisional = Dataset::new(inputs, targets, 0.0)?;
    let init = options
        .init
        .unwrap_or_else(|| initial_hyper(&provisional, options.mean));
    let (hyper, report) = match &options.optimizer {
        Some(config) => {
            let fit = optimize_hyper(&provisional, options.family, options.mean, init, config)?;
            (fit.hyper, Some(fit))
        }
        None => (init, None),
    };
    let dataset = provisional.with_noise_variance(hyper.noise_variance())?;
    let gp = TrainedGP::fit(&dataset, hyper.kernel(options.family)?, options.mean)?;
    Ok((gp, report))
}
