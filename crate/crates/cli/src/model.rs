//! Fitting from CSV data and the JSON model file.

use std::path::Path;

use gpsysid_core::gp::{self, fit_with_options, initial_hyper, GpSnapshot, HyperFit};
use gpsysid_core::gpss::{fit_basis_gpss_observed, fit_gpss_observed, make_sine_basis, BasisSnapshot, GpssSnapshot};
use gpsysid_core::lag::{fit_lag_model, Normalization, SignalRecord};
use gpsysid_core::temporal::optimize_hyper_temporal;
use gpsysid_core::{
    BasisModel, Dataset, GpssModel, HyperVector, LagFitOptions, LagModel, LagSpec, Matrix, MeanFunction, OptimConfig,
    StateTrajectory, StopReason, TemporalGp, TrainedGP,
};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, RunConfig};
use crate::data::Table;
use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "gpsysid-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    Gp {
        gp: GpSnapshot,
    },
    Lag {
        spec: LagSpec,
        gp: GpSnapshot,
        normalization: Option<Normalization>,
    },
    Temporal {
        model: TemporalGp,
    },
    Gpss {
        model: GpssSnapshot,
    },
    GpssBasis {
        model: BasisSnapshot,
    },
}

/// On-disk model: the resolved configuration plus everything needed to
/// rebuild the fitted model (training data included; GPs are refitted on
/// load, which reproduces them bit for bit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub payload: Payload,
}

impl ModelFile {
    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("model file serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::input(format!("cannot read model {}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::input(format!("model {}: {e}", path.display())))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(CliError::input(format!(
                "model {}: unsupported format {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        Ok(file)
    }

    pub fn load(&self) -> CliResult<Loaded> {
        Ok(match &self.payload {
            Payload::Gp { gp } => Loaded::Gp(gp.restore()?),
            Payload::Lag { spec, gp, normalization } => Loaded::Lag(LagModel {
                spec: *spec,
                gp: gp.restore()?,
                normalization: *normalization,
            }),
            Payload::Temporal { model } => Loaded::Temporal(model.clone()),
            Payload::Gpss { model } => Loaded::Gpss(model.restore()?),
            Payload::GpssBasis { model } => Loaded::Basis(model.restore()),
        })
    }
}

pub enum Loaded {
    Gp(TrainedGP),
    Lag(LagModel),
    Temporal(TemporalGp),
    Gpss(GpssModel),
    Basis(BasisModel),
}

/// Summary of one fitted GP for the fit report.
#[derive(Clone, Debug, PartialEq)]
pub struct GpReport {
    pub name: String,
    pub nll: f64,
    pub hyper: HyperVector,
    /// `None` when the hyperparameters were fixed.
    pub iterations: Option<usize>,
    pub stop: Option<StopReason>,
}

impl GpReport {
    fn new(name: impl Into<String>, nll: f64, hyper: HyperVector, fit: Option<&HyperFit>) -> Self {
        GpReport {
            name: name.into(),
            nll,
            hyper,
            iterations: fit.map(|f| f.iterations),
            stop: fit.map(|f| f.stop),
        }
    }

    /// NLL of a trained GP on its own training data.
    fn from_gp(name: impl Into<String>, gp: &TrainedGP, fit: Option<&HyperFit>) -> CliResult<Self> {
        let data = Dataset::new(gp.train_inputs().clone(), gp.train_targets().to_vec(), gp.noise_variance())?;
        let (nll, _) = gp::nll(&data, *gp.kernel(), gp.mean_function())?;
        Ok(GpReport::new(name, nll, gp.hyper(), fit))
    }
}

pub fn series(table: &Table) -> CliResult<(Vec<f64>, Vec<f64>)> {
    Ok((table.dense("t")?, table.dense("y")?))
}

pub fn records(table: &Table, spec: LagSpec) -> CliResult<Vec<SignalRecord>> {
    let y = table.dense("y")?;
    let u = if spec.m > 0 { Some(table.dense("u")?) } else { None };
    Ok(gpsysid_core::lag::records_from(&y, u.as_deref()))
}

/// Reads a (k, x1..xd, u, y) table: x on every row, u on rows 0..N−1, y on
/// rows 1..N (y_k observes x_k).
pub fn trajectory(table: &Table) -> CliResult<StateTrajectory> {
    let names = table.state_columns();
    if names.is_empty() {
        return Err(CliError::input("missing column 'x1'"));
    }
    let rows = table.rows();
    if rows < 2 {
        return Err(CliError::input(format!("need at least 2 rows of states, found {rows}")));
    }
    let cols = names.iter().map(|n| table.dense(n)).collect::<CliResult<Vec<_>>>()?;
    let states = Matrix::from_fn(rows, names.len(), |k, j| cols[j][k]);
    let inputs = if table.has("u") { Some(table.dense_range("u", 0..rows - 1)?) } else { None };
    let outputs = if table.has("y") { Some(table.dense_range("y", 1..rows)?) } else { None };
    Ok(StateTrajectory::new(states, inputs, outputs)?)
}

/// Fits the configured model on `table`.
pub fn fit(config: &RunConfig, seed: Option<u64>, table: &Table) -> CliResult<(Payload, Vec<GpReport>)> {
    match config.kind {
        ModelKind::Gp => {
            let (t, y) = series(table)?;
            let (gp, fit) = fit_with_options(Matrix::column(&t), y, &config.gp_options(seed)?)?;
            let report = GpReport::from_gp("gp", &gp, fit.as_ref())?;
            Ok((Payload::Gp { gp: gp.snapshot() }, vec![report]))
        }
        ModelKind::Nfir | ModelKind::Narx | ModelKind::Noe => {
            let spec = config.lag_spec()?;
            let records = records(table, spec)?;
            let options = LagFitOptions {
                gp: config.gp_options(seed)?,
                normalize: config.normalize,
            };
            let (model, fit) = fit_lag_model(&records, spec, &options)?;
            let report = GpReport::from_gp("gp", &model.gp, fit.as_ref())?;
            Ok((
                Payload::Lag {
                    spec,
                    gp: model.gp.snapshot(),
                    normalization: model.normalization,
                },
                vec![report],
            ))
        }
        ModelKind::Temporal => fit_temporal(config, table),
        ModelKind::Gpss => {
            let traj = trajectory(table)?;
            let (model, fits) = fit_gpss_observed(&traj, &config.gp_options(seed)?)?;
            let fit_at = |i: usize| fits.get(i);
            let mut reports = Vec::new();
            for (j, gp) in model.f_gps.iter().enumerate() {
                reports.push(GpReport::from_gp(format!("f{}", j + 1), gp, fit_at(j))?);
            }
            if let gpsysid_core::gpss::Measurement::Gp(g) = &model.measurement {
                reports.push(GpReport::from_gp("g", g, fit_at(model.f_gps.len()))?);
            }
            Ok((Payload::Gpss { model: model.snapshot() }, reports))
        }
        ModelKind::GpssBasis => fit_basis(config, seed, table),
    }
}

fn fit_temporal(config: &RunConfig, table: &Table) -> CliResult<(Payload, Vec<GpReport>)> {
    let (t, y) = series(table)?;
    let family = config.kernel.family;
    let init = match config.kernel.hyper()? {
        Some(h) => h,
        None => initial_hyper(&Dataset::from_scalar(&t, y.clone(), 0.0)?, MeanFunction::Zero),
    };
    let (hyper, fit) = if config.optimizer.enabled {
        let opt = OptimConfig {
            max_iter: config.optimizer.max_iter,
            grad_tol: config.optimizer.grad_tol,
            restarts: 1,
            seed: 0,
        };
        let (h, _, iterations, stop) = optimize_hyper_temporal(family, &t, &y, init, &opt)?;
        (h, Some((iterations, stop)))
    } else {
        (init, None)
    };
    let model = TemporalGp::new(hyper.kernel(family)?, hyper.noise_variance(), t, y)?;
    let nll = gpsysid_core::temporal::temporal_nll(&model.kernel, &model.times, &model.values, model.noise_variance)?;
    let report = GpReport {
        name: "gp".into(),
        nll,
        hyper,
        iterations: fit.map(|f| f.0),
        stop: fit.map(|f| f.1),
    };
    Ok((Payload::Temporal { model }, vec![report]))
}

/// Hyperparameters come from the config, or from maximizing the exact-GP
/// likelihood of the first state dimension's transitions. The spectral
/// density of that kernel sets the coefficient prior. With outputs present
/// the measurement is y = x1 + ε, with the noise variance estimated from
/// the residuals.
fn fit_basis(config: &RunConfig, seed: Option<u64>, table: &Table) -> CliResult<(Payload, Vec<GpReport>)> {
    let traj = trajectory(table)?;
    let section = config.basis.as_ref().expect("validated");
    let bounds: Vec<(f64, f64)> = section.lower.iter().copied().zip(section.upper.iter().copied()).collect();
    let expected = traj.state_dim() + usize::from(traj.inputs().is_some());
    if bounds.len() != expected {
        return Err(CliError::input(format!(
            "basis covers {} dimensions but the data has {expected} (states plus input)",
            bounds.len()
        )));
    }
    let basis = make_sine_basis(&bounds, &section.counts)?;
    let (gp, fit) = fit_with_options(traj.transition_inputs(), traj.transition_targets(0), &config.gp_options(seed)?)?;
    let report = GpReport::from_gp("f1", &gp, fit.as_ref())?;
    let prior = basis.spectral_prior(gp.kernel());
    let mut model = fit_basis_gpss_observed(&traj, &basis, &prior, gp.noise_variance())?;
    if let Some(y) = traj.outputs() {
        let n = y.len() as f64;
        let r = y.iter().enumerate().map(|(k, y)| (y - traj.state(k + 1)[0]).powi(2)).sum::<f64>() / n;
        let mut c = vec![0.0; traj.state_dim()];
        c[0] = 1.0;
        model = model.with_linear_measurement(c, r.max(f64::MIN_POSITIVE))?;
    }
    Ok((Payload::GpssBasis { model: model.snapshot() }, vec![report]))
}
