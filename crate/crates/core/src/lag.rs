//! GP-NFIR, GP-NARX and GP-NOE models.
//!
//! All three reduce to GP regression on lag vectors
//! `z_k = (y_{k-1}, …, y_{k-n}, u_{k-1}, …, u_{k-m})` with target `y_k`.
//! NFIR is the special case `n = 0`. NOE models are trained exactly like
//! NARX models on measured outputs and differ only at prediction time,
//! where [`LagModel::simulate_noe`] feeds the model's own posterior means
//! back into the output lags.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, Dataset, GpFitOptions, HyperFit, TrainedGP};
use crate::numerics::Matrix;

/// A predictive mean and variance.
pub type MeanVar = (f64, f64);

/// Ordering of the regression vector, recorded alongside serialized models.
pub const INPUT_ORDER: &str = "y-lags newest-first, then u-lags newest-first";

/// Half-width of the 95% band in standard deviations.
pub const Z95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub k: i64,
    pub u: Option<f64>,
    pub y: f64,
}

/// Builds contiguous records starting at k = 0.
pub fn records_from(y: &[f64], u: Option<&[f64]>) -> Vec<SignalRecord> {
    y.iter()
        .enumerate()
        .map(|(i, &y)| SignalRecord {
            k: i as i64,
            u: u.map(|u| u[i]),
            y,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    /// Number of past outputs.
    pub n: usize,
    /// Number of past inputs.
    pub m: usize,
}

impl LagSpec {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n + m == 0 {
            return Err(Error::InvalidArgument(
                "lag spec needs at least one output or input lag".into(),
            ));
        }
        Ok(LagSpec { n, m })
    }

    pub fn nfir(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("NFIR models need m >= 1".into()));
        }
        LagSpec::new(0, m)
    }

    pub fn narx(n: usize, m: usize) -> Result<Self> {
        LagSpec::new(n, m)
    }

    pub fn is_nfir(&self) -> bool {
        self.n == 0
    }

    pub fn max_lag(&self) -> usize {
        self.n.max(self.m)
    }

    /// Dimension of the regression vector.
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    fn validate(&self) -> Result<()> {
        LagSpec::new(self.n, self.m).map(|_| ())
    }

    /// Regression vector for predicting the output that follows the given
    /// chronological histories.
    pub fn regressor(&self, y_hist: &[f64], u_hist: &[f64]) -> Result<Vec<f64>> {
        if y_hist.len() < self.n {
            return Err(Error::InsufficientHistory {
                what: "outputs",
                needed: self.n,
                found: y_hist.len(),
            });
        }
        if u_hist.len() < self.m {
            return Err(Error::InsufficientHistory {
                what: "inputs",
                needed: self.m,
                found: u_hist.len(),
            });
        }
        let ys = y_hist.iter().rev().take(self.n);
        let us = u_hist.iter().rev().take(self.m);
        Ok(ys.chain(us).copied().collect())
    }
}

/// z-scoring constants applied to outputs and inputs before embedding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub y_mean: f64,
    pub y_std: f64,
    pub u_mean: f64,
    pub u_std: f64,
}

impl Normalization {
    pub fn from_series(y: &[f64], u: Option<&[f64]>) -> Self {
        let (y_mean, y_std) = mean_std(y);
        let (u_mean, u_std) = u.map_or((0.0, 1.0), mean_std);
        Normalization {
            y_mean,
            y_std,
            u_mean,
            u_std,
        }
    }

    fn y(&self, v: f64) -> f64 {
        (v - self.y_mean) / self.y_std
    }

    fn u(&self, v: f64) -> f64 {
        (v - self.u_mean) / self.u_std
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    let std = gp::std_dev(v);
    (mean, if std > 1e-12 { std } else { 1.0 })
}

fn split_records(records: &[SignalRecord], need_inputs: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    for (i, w) in records.windows(2).enumerate() {
        if w[1].k != w[0].k + 1 {
            return Err(Error::InvalidArgument(format!(
                "record indices must be contiguous and increasing (at position {})",
                i + 1
            )));
        }
    }
    if records.iter().any(|r| !r.y.is_finite() || r.u.is_some_and(|u| !u.is_finite())) {
        return Err(Error::InvalidArgument("records contain non-finite values".into()));
    }
    let y = records.iter().map(|r| r.y).collect();
    let u = if need_inputs {
        let mut u = Vec::with_capacity(records.len());
        for (index, r) in records.iter().enumerate() {
            u.push(r.u.ok_or(Error::MissingInput { index })?);
        }
        Some(u)
    } else {
        let all: Option<Vec<f64>> = records.iter().map(|r| r.u).collect();
        all
    };
    Ok((y, u))
}

fn embed_series(y: &[f64], u: &[f64], spec: LagSpec) -> Result<(Matrix, Vec<f64>)> {
    let p = spec.max_lag();
    if y.len() <= p {
        return Err(Error::SequenceTooShort {
            needed: p,
            found: y.len(),
        });
    }
    let rows = y.len() - p;
    let mut data = Vec::with_capacity(rows * spec.dim());
    let mut targets = Vec::with_capacity(rows);
    for k in p..y.len() {
        let u_hist: &[f64] = if spec.m > 0 { &u[k - spec.m..k] } else { &[] };
        data.extend(spec.regressor(&y[k - spec.n..k], u_hist)?);
        targets.push(y[k]);
    }
    Ok((Matrix::from_vec(rows, spec.dim(), data)?, targets))
}

/// Lag-embeds a record sequence into a regression dataset (noise variance 0).
///
/// Row `k − max(n, m)` holds the regressor for target `y_k`.
pub fn embed(records: &[SignalRecord], spec: LagSpec) -> Result<Dataset> {
    spec.validate()?;
    let (y, u) = split_records(records, spec.m > 0)?;
    let u = u.unwrap_or_default();
    if y.len() <= spec.max_lag() {
        return Err(Error::SequenceTooShort {
            needed: spec.max_lag(),
            found: y.len(),
        });
    }
    let (z, t) = embed_series(&y, &u, spec)?;
    Dataset::new(z, t, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagFitOptions {
    pub gp: GpFitOptions,
    /// z-score outputs and inputs before embedding.
    pub normalize: bool,
}

impl LagFitOptions {
    pub fn new(gp: GpFitOptions) -> Self {
        LagFitOptions { gp, normalize: false }
    }
}

#[derive(Clone, Debug)]
pub struct LagModel {
    pub spec: LagSpec,
    pub gp: TrainedGP,
    pub normalization: Option<Normalization>,
}

/// Embeds the records and fits a GP on the lag vectors.
pub fn fit_lag_model(
    records: &[SignalRecord],
    spec: LagSpec,
    options: &LagFitOptions,
) -> Result<(LagModel, Option<HyperFit>)> {
    spec.validate()?;
    let (y, u) = split_records(records, spec.m > 0)?;
    let normalization = options
        .normalize
        .then(|| Normalization::from_series(&y, u.as_deref()));
    let (y, u) = match &normalization {
        Some(nz) => (
            y.iter().map(|&v| nz.y(v)).collect::<Vec<_>>(),
            u.map(|u| u.iter().map(|&v| nz.u(v)).collect::<Vec<_>>()),
        ),
        None => (y, u),
    };
    let (z, t) = embed_series(&y, &u.unwrap_or_default(), spec)?;
    let (gp, report) = gp::fit_with_options(z, t, &options.gp)?;
    Ok((
        LagModel {
            spec,
            gp,
            normalization,
        },
        report,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    OneStep,
    FreeRun,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Fraction of targets inside mean ± 1.96·√(variance + σ_n²).
    pub coverage95: f64,
    /// Mean negative log predictive density of the targets.
    pub nlpd: f64,
    pub count: usize,
}

/// Error metrics of (mean, latent variance) predictions against `truth`.
pub fn metrics(predictions: &[(f64, f64)], truth: &[f64], noise_variance: f64) -> Metrics {
    let count = predictions.len().min(truth.len());
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut covered = 0usize;
    let mut nlpd = 0.0;
    for (&(mean, var), &y) in predictions.iter().zip(truth) {
        let e = y - mean;
        let total = var + noise_variance;
        se += e * e;
        ae += e.abs();
        if e.abs() <= Z95 * total.sqrt() {
            covered += 1;
        }
        nlpd += 0.5 * ((2.0 * PI * total).ln() + e * e / total);
    }
    let n = count.max(1) as f64;
    Metrics {
        rmse: (se / n).sqrt(),
        mae: ae / n,
        coverage95: covered as f64 / n,
        nlpd: nlpd / n,
        count,
    }
}

impl LagModel {
    /// Observation-noise variance in output units.
    pub fn noise_variance(&self) -> f64 {
        let scale = self.normalization.map_or(1.0, |nz| nz.y_std);
        self.gp.noise_variance() * scale * scale
    }

    /// Prior variance bound s² in output units.
    pub fn prior_variance(&self) -> f64 {
        let scale = self.normalization.map_or(1.0, |nz| nz.y_std);
        self.gp.kernel().variance() * scale * scale
    }

    fn predict_normalized(&self, y_hist: &[f64], u_hist: &[f64]) -> Result<(f64, f64)> {
        let z = self.spec.regressor(y_hist, u_hist)?;
        self.gp.predict_point(&z)
    }

    fn denormalize(&self, (mean, var): (f64, f64)) -> (f64, f64) {
        match self.normalization {
            Some(nz) => (mean * nz.y_std + nz.y_mean, var * nz.y_std * nz.y_std),
            None => (mean, var),
        }
    }

    /// Posterior mean and latent variance of the next output given
    /// chronological output and input histories (the last entries are
    /// y_{k-1} and u_{k-1}).
    pub fn predict_one_step(&self, y_hist: &[f64], u_hist: &[f64]) -> Result<(f64, f64)> {
        let (y, u) = self.normalize_histories(y_hist, u_hist);
        let out = self.predict_normalized(&y, &u)?;
        Ok(self.denormalize(out))
    }

    fn normalize_histories(&self, y_hist: &[f64], u_hist: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self.normalization {
            Some(nz) => (
                y_hist.iter().map(|&v| nz.y(v)).collect(),
                u_hist.iter().map(|&v| nz.u(v)).collect(),
            ),
            None => (y_hist.to_vec(), u_hist.to_vec()),
        }
    }

    /// Free-run (output-error) simulation.
    ///
    /// `inputs` are u_0, u_1, … and `init_outputs` supplies the outputs just
    /// before the first simulated step k₀ = max(n, m) (its last n entries are
    /// used). Step h predicts y_{k₀+h}; posterior means are fed back as
    /// pseudo-outputs. The reported variances are the GP's conditional
    /// variances at the propagated regressors and ignore the uncertainty of
    /// the fed-back outputs, so they underestimate the true spread.
    pub fn simulate_noe(
        &self,
        inputs: &[f64],
        init_outputs: &[f64],
        horizon: usize,
    ) -> Result<Vec<(f64, f64)>> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let (n, m) = (self.spec.n, self.spec.m);
        if init_outputs.len() < n {
            return Err(Error::InsufficientHistory {
                what: "initial outputs",
                needed: n,
                found: init_outputs.len(),
            });
        }
        let start = self.spec.max_lag();
        if m > 0 && inputs.len() < start + horizon - 1 {
            return Err(Error::InsufficientHistory {
                what: "inputs",
                needed: start + horizon - 1,
                found: inputs.len(),
            });
        }
        let (mut outputs, u) =
            self.normalize_histories(&init_outputs[init_outputs.len() - n..], inputs);
        let mut result = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let k = start + h;
            let u_hist: &[f64] = if m > 0 { &u[k - m..k] } else { &[] };
            let (mean, var) = self.predict_normalized(&outputs[outputs.len() - n..], u_hist)?;
            outputs.push(mean);
            result.push(self.denormalize((mean, var)));
        }
        Ok(result)
    }

    /// One-step or free-run predictions for every index k ≥ max(n, m) of
    /// the records, paired with the measured outputs.
    pub fn predictions(&self, records: &[SignalRecord], mode: EvalMode) -> Result<(Vec<MeanVar>, Vec<f64>)> {
        let (y, u) = split_records(records, self.spec.m > 0)?;
        let u = u.unwrap_or_default();
        let p = self.spec.max_lag();
        if y.len() <= p {
            return Err(Error::SequenceTooShort {
                needed: p,
                found: y.len(),
            });
        }
        let preds = match mode {
            EvalMode::OneStep => (p..y.len())
                .map(|k| {
                    let u_hist: &[f64] = if self.spec.m > 0 { &u[k - self.spec.m..k] } else { &[] };
                    self.predict_one_step(&y[k - self.spec.n..k], u_hist)
                })
                .collect::<Result<Vec<_>>>()?,
            EvalMode::FreeRun => self.simulate_noe(&u, &y[..p], y.len() - p)?,
        };
        Ok((preds, y[p..].to_vec()))
    }

    pub fn evaluate(&self, records: &[SignalRecord], mode: EvalMode) -> Result<Metrics> {
        let (preds, truth) = self.predictions(records, mode)?;
        Ok(metrics(&preds, &truth, self.noise_variance()))
    }
}
