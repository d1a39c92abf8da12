//! The five subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use gpsysid_core::gpss::{bootstrap_pf, simulate, StatePrior};
use gpsysid_core::lag::{metrics, MeanVar, Z95};
use gpsysid_core::{synth, EvalMode, Kernel, KernelFamily, Matrix, SimMode, StateSpaceModel};

use crate::config::{require_seed, ModelKind, RunConfig};
use crate::data::{csv_text, fmt_f64, write_output, Table};
use crate::error::{CliError, CliResult};
use crate::model::{self, GpReport, Loaded, ModelFile, FORMAT, VERSION};

pub const GENERATORS: [&str; 5] = ["sinusoid", "linear-arx", "logistic-narx", "gp-draw", "pendulum"];

/// Output and reporting settings shared by every command.
pub struct Io<'a> {
    pub out: Option<&'a Path>,
    pub quiet: bool,
}

impl Io<'_> {
    fn report(&self, lines: &[String]) -> CliResult<()> {
        if self.quiet {
            return Ok(());
        }
        let mut text = lines.join("\n");
        text.push('\n');
        write_output(None, text.as_bytes())
    }
}

/// `key=value` generator parameters with per-generator defaults.
struct Params {
    generator: &'static str,
    values: BTreeMap<String, String>,
}

impl Params {
    fn parse(generator: &'static str, sets: &[String], allowed: &[&str]) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("--set expects KEY=VALUE, got '{s}'")))?;
            let k = k.trim();
            if !allowed.contains(&k) {
                return Err(CliError::input(format!(
                    "generator {generator} has no parameter '{k}' (known: {})",
                    allowed.join(", ")
                )));
            }
            values.insert(k.to_owned(), v.trim().to_owned());
        }
        Ok(Params { generator, values })
    }

    fn num(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                CliError::input(format!("generator {}: {key} = '{v}' is not a finite number", self.generator))
            }),
        }
    }

    fn positive(&self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.num(key, default)?;
        synth::check_positive(key, v).map_err(CliError::from)
    }

    fn nonnegative(&self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.num(key, default)?;
        if v < 0.0 {
            return Err(CliError::input(format!("generator {}: {key} must be nonnegative", self.generator)));
        }
        Ok(v)
    }
}

fn series_csv(t: &[f64], u: Option<&[f64]>, y: &[f64]) -> CliResult<Vec<u8>> {
    let headers: Vec<&str> = if u.is_some() { vec!["t", "u", "y"] } else { vec!["t", "y"] };
    let rows: Vec<Vec<String>> = (0..y.len())
        .map(|i| {
            let mut row = vec![fmt_f64(t[i])];
            if let Some(u) = u {
                row.push(fmt_f64(u[i]));
            }
            row.push(fmt_f64(y[i]));
            row
        })
        .collect();
    csv_text(&headers, &rows)
}

/// (k, x1..xd, u, y) rows: u is blank on the last row, y on the first.
fn trajectory_csv(traj: &gpsysid_core::StateTrajectory) -> CliResult<Vec<u8>> {
    let d = traj.state_dim();
    let names: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    let mut headers: Vec<&str> = vec!["k"];
    headers.extend(names.iter().map(String::as_str));
    if traj.inputs().is_some() {
        headers.push("u");
    }
    if traj.outputs().is_some() {
        headers.push("y");
    }
    let n = traj.len();
    let rows: Vec<Vec<String>> = (0..=n)
        .map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(traj.state(k).iter().map(|v| fmt_f64(*v)));
            if let Some(u) = traj.inputs() {
                row.push(if k < n { fmt_f64(u[k]) } else { String::new() });
            }
            if let Some(y) = traj.outputs() {
                row.push(if k > 0 { fmt_f64(y[k - 1]) } else { String::new() });
            }
            row
        })
        .collect();
    csv_text(&headers, &rows)
}

pub fn gen(name: &str, n: usize, sets: &[String], seed: Option<u64>, io: &Io) -> CliResult<()> {
    let generator = *GENERATORS
        .iter()
        .find(|g| **g == name)
        .ok_or_else(|| CliError::UnknownGenerator(name.to_owned()))?;
    let seed = require_seed(seed, "gen")?;
    let bytes = match generator {
        "sinusoid" => {
            let p = Params::parse(generator, sets, &["noise"])?;
            let s = synth::sinusoid(n, p.nonnegative("noise", 0.1)?, seed);
            series_csv(&s.t, None, &s.y)?
        }
        "linear-arx" => {
            let p = Params::parse(generator, sets, &["a", "b", "noise"])?;
            let s = synth::linear_arx(n, p.num("a", 0.9)?, p.num("b", 0.5)?, p.nonnegative("noise", 0.05)?, seed);
            series_csv(&s.t, s.u.as_deref(), &s.y)?
        }
        "logistic-narx" => {
            let p = Params::parse(generator, sets, &["r", "noise"])?;
            let s = synth::logistic_narx(n, p.num("r", 3.5)?, p.nonnegative("noise", 0.01)?, seed);
            series_csv(&s.t, s.u.as_deref(), &s.y)?
        }
        "gp-draw" => {
            let p = Params::parse(
                generator,
                sets,
                &["kernel", "magnitude", "lengthscale", "span", "noise", "grid"],
            )?;
            let family: KernelFamily = match p.values.get("kernel") {
                Some(v) => v.parse().map_err(CliError::from)?,
                None => KernelFamily::Matern32,
            };
            let kernel = Kernel::new(family, p.positive("magnitude", 1.0)?, p.positive("lengthscale", 1.0)?)?;
            let span = p.positive("span", 10.0)?;
            let noise = p.nonnegative("noise", 0.1)?;
            let grid = p.num("grid", 0.0)? != 0.0;
            gp_draw(&kernel, n, span, noise, grid, seed)?
        }
        "pendulum" => {
            let p = Params::parse(generator, sets, &["x0", "gain", "process_noise", "noise"])?;
            let traj = synth::pendulum(
                n.max(1),
                p.num("x0", 0.5)?,
                p.num("gain", 0.5)?,
                p.nonnegative("process_noise", 0.02)?,
                p.nonnegative("noise", 0.05)?,
                seed,
            )?;
            if n == 0 {
                let with_u = traj.inputs().is_some();
                csv_text(if with_u { &["k", "x1", "u", "y"] } else { &["k", "x1", "y"] }, &[])?
            } else {
                trajectory_csv(&traj)?
            }
        }
        _ => unreachable!("generator list is exhaustive"),
    };
    write_output(io.out, &bytes)
}

/// GP prior draw at random (sorted) or equally spaced times in [0, span].
fn gp_draw(kernel: &Kernel, n: usize, span: f64, noise: f64, grid: bool, seed: u64) -> CliResult<Vec<u8>> {
    if n == 0 {
        return series_csv(&[], None, &[]);
    }
    if !grid {
        let s = synth::gp_draw(kernel, n, span, noise, seed)?;
        return series_csv(&s.t, None, &s.y);
    }
    let mut rng = synth::rng(seed);
    let t: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 0.0 } else { span * i as f64 / (n - 1) as f64 })
        .collect();
    let f = synth::latent_draw(kernel, &t, &mut rng)?;
    let y: Vec<f64> = f.iter().map(|f| f + noise * synth::normal(&mut rng)).collect();
    series_csv(&t, None, &y)
}

fn gp_report_lines(reports: &[GpReport]) -> Vec<String> {
    let mut lines = Vec::new();
    for r in reports {
        let name = &r.name;
        lines.push(format!("{name}.nll={}", fmt_f64(r.nll)));
        lines.push(format!("{name}.log_magnitude={}", fmt_f64(r.hyper.0[0])));
        lines.push(format!("{name}.log_lengthscale={}", fmt_f64(r.hyper.0[1])));
        lines.push(format!("{name}.log_noise_std={}", fmt_f64(r.hyper.0[2])));
        lines.push(format!("{name}.magnitude={}", fmt_f64(r.hyper.magnitude())));
        lines.push(format!("{name}.lengthscale={}", fmt_f64(r.hyper.lengthscale())));
        lines.push(format!("{name}.noise_std={}", fmt_f64(r.hyper.noise_std())));
        match (r.iterations, r.stop) {
            (Some(it), Some(stop)) => {
                lines.push(format!("{name}.iterations={it}"));
                let stop = serde_json::to_value(stop).ok().and_then(|v| v.as_str().map(str::to_owned));
                lines.push(format!("{name}.stop={}", stop.unwrap_or_default()));
            }
            _ => lines.push(format!("{name}.iterations=fixed")),
        }
    }
    lines
}

pub fn fit(config_path: Option<&Path>, data: &Path, seed: Option<u64>, io: &Io) -> CliResult<()> {
    let config_path = config_path.ok_or_else(|| CliError::input("fit needs --config"))?;
    let out = io.out.ok_or_else(|| CliError::input("fit needs --out for the model file"))?;
    let config = RunConfig::load(config_path)?;
    let seed = seed.or(config.seed);
    let table = Table::read(data)?;
    let (payload, reports) = model::fit(&config, seed, &table)?;
    for r in &reports {
        if !r.nll.is_finite() {
            return Err(CliError::Numerical(format!("{}: non-finite NLL", r.name)));
        }
    }
    let hash = config.hash(seed);
    let file = ModelFile {
        format: FORMAT.into(),
        version: VERSION,
        config_hash: hash.clone(),
        seed,
        config: config.clone(),
        payload,
    };
    write_output(Some(out), &file.to_json())?;
    let mut lines = vec![
        format!("kind={}", config.kind),
        format!("config_hash={hash}"),
        format!("seed={}", seed.map_or("none".into(), |s| s.to_string())),
        format!("model={}", out.display()),
    ];
    lines.extend(gp_report_lines(&reports));
    io.report(&lines)
}

/// Columns for one predicted quantity.
struct Band<'a> {
    suffix: String,
    preds: &'a [(f64, f64)],
    noise: f64,
}

fn prediction_csv(
    index_name: &str,
    index: &[String],
    bands: &[Band],
    quantiles: bool,
    observation_noise: bool,
) -> CliResult<Vec<u8>> {
    let mut headers = vec![index_name.to_owned()];
    for b in bands {
        headers.push(format!("mean{}", b.suffix));
        headers.push(format!("variance{}", b.suffix));
        if quantiles {
            headers.push(format!("q2.5{}", b.suffix));
            headers.push(format!("q97.5{}", b.suffix));
        }
    }
    let rows: Vec<Vec<String>> = index
        .iter()
        .enumerate()
        .map(|(i, idx)| {
            let mut row = vec![idx.clone()];
            for b in bands {
                let (mean, var) = b.preds[i];
                row.push(fmt_f64(mean));
                row.push(fmt_f64(var));
                if quantiles {
                    let total = if observation_noise { var + b.noise } else { var };
                    let half = Z95 * total.sqrt();
                    row.push(fmt_f64(mean - half));
                    row.push(fmt_f64(mean + half));
                }
            }
            row
        })
        .collect();
    let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    csv_text(&refs, &rows)
}

fn single_band(preds: &[(f64, f64)], noise: f64) -> Vec<Band<'_>> {
    vec![Band {
        suffix: String::new(),
        preds,
        noise,
    }]
}

/// Per-dimension bands of a state-space model's one-step predictions.
fn state_bands<'a>(preds: &'a [Vec<(f64, f64)>], q: &[f64]) -> Vec<Band<'a>> {
    let d = q.len();
    preds
        .iter()
        .zip(q)
        .enumerate()
        .map(|(j, (p, q))| Band {
            suffix: if d == 1 { String::new() } else { format!("_x{}", j + 1) },
            preds: p,
            noise: *q,
        })
        .collect()
}

fn state_model(loaded: &Loaded) -> Option<&dyn StateSpaceModel> {
    match loaded {
        Loaded::Gpss(m) => Some(m),
        Loaded::Basis(m) => Some(m),
        _ => None,
    }
}

/// One-step state predictions from every row that has the needed input.
/// Returns per-dimension predictions and the predicted-state indices.
fn state_one_step(model: &dyn StateSpaceModel, table: &Table) -> CliResult<(Vec<Vec<MeanVar>>, Vec<usize>)> {
    let names = table.state_columns();
    if names.len() != model.state_dim() {
        return Err(CliError::input(format!(
            "model has {} state columns, data has {}",
            model.state_dim(),
            names.len()
        )));
    }
    let cols = names.iter().map(|n| table.column(n)).collect::<CliResult<Vec<_>>>()?;
    let u = if model.uses_input() { Some(table.column("u")?) } else { None };
    let mut preds = vec![Vec::new(); names.len()];
    let mut index = Vec::new();
    for k in 0..table.rows() {
        let uk = match u {
            Some(u) => match u[k] {
                Some(v) => Some(v),
                None => continue,
            },
            None => None,
        };
        let x = cols
            .iter()
            .zip(&names)
            .map(|(c, n)| c[k].ok_or_else(|| CliError::input(format!("row {} column '{n}': empty cell", k + 1))))
            .collect::<CliResult<Vec<f64>>>()?;
        let (mean, var) = model.dynamics(&x, uk)?;
        for j in 0..names.len() {
            preds[j].push((mean[j], var[j]));
        }
        index.push(k + 1);
    }
    Ok((preds, index))
}

fn lag_records(model: &gpsysid_core::LagModel, table: &Table) -> CliResult<Vec<gpsysid_core::SignalRecord>> {
    model::records(table, model.spec)
}

pub struct PredictFlags {
    pub quantiles: bool,
    pub observation_noise: bool,
}

pub fn predict(model_path: &Path, data: &Path, flags: &PredictFlags, io: &Io) -> CliResult<()> {
    let file = ModelFile::read(model_path)?;
    let loaded = file.load()?;
    let table = Table::read(data)?;
    let PredictFlags {
        quantiles,
        observation_noise,
    } = *flags;
    let bytes = match &loaded {
        Loaded::Gp(gp) => {
            let t = table.dense("t")?;
            let post = gp.predict(&Matrix::column(&t), false)?;
            let preds: Vec<(f64, f64)> = post.mean.iter().copied().zip(post.variances()).collect();
            let index: Vec<String> = t.iter().map(|v| fmt_f64(*v)).collect();
            prediction_csv("t", &index, &single_band(&preds, gp.noise_variance()), quantiles, observation_noise)?
        }
        Loaded::Temporal(tgp) => {
            let t = table.dense("t")?;
            let post = tgp.predict(&t)?;
            let preds: Vec<(f64, f64)> = post.mean.iter().copied().zip(post.variance.iter().copied()).collect();
            let index: Vec<String> = t.iter().map(|v| fmt_f64(*v)).collect();
            prediction_csv("t", &index, &single_band(&preds, tgp.noise_variance), quantiles, observation_noise)?
        }
        Loaded::Lag(m) => {
            let records = lag_records(m, &table)?;
            let (preds, _) = m.predictions(&records, EvalMode::OneStep)?;
            let p = m.spec.max_lag();
            let index: Vec<String> = (p..p + preds.len()).map(|k| k.to_string()).collect();
            prediction_csv("k", &index, &single_band(&preds, m.noise_variance()), quantiles, observation_noise)?
        }
        Loaded::Gpss(_) | Loaded::Basis(_) => {
            let model = state_model(&loaded).expect("state-space model");
            let (preds, index) = state_one_step(model, &table)?;
            let index: Vec<String> = index.iter().map(usize::to_string).collect();
            let q = model.process_noise_var();
            prediction_csv("k", &index, &state_bands(&preds, &q), quantiles, observation_noise)?
        }
    };
    write_output(io.out, &bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimulateMode {
    Mean,
    Sample,
}

pub fn simulate_cmd(
    model_path: &Path,
    data: &Path,
    horizon: Option<usize>,
    mode: SimulateMode,
    seed: Option<u64>,
    flags: &PredictFlags,
    io: &Io,
) -> CliResult<()> {
    let file = ModelFile::read(model_path)?;
    let seed = seed.or(file.seed);
    let loaded = file.load()?;
    let table = Table::read(data)?;
    let bytes = match &loaded {
        Loaded::Gp(_) | Loaded::Temporal(_) => {
            return Err(CliError::input(format!(
                "simulate needs a dynamical model; {} models only predict",
                file.config.kind
            )))
        }
        Loaded::Lag(m) => {
            if mode == SimulateMode::Sample {
                return Err(CliError::input("lag models simulate posterior means only (--mode mean)"));
            }
            let p = m.spec.max_lag();
            let y = table.dense_range("y", 0..p.min(table.rows()))?;
            let u = if m.spec.m > 0 { table.dense("u")? } else { Vec::new() };
            let available = if m.spec.m > 0 { (u.len() + 1).saturating_sub(p) } else { table.rows().saturating_sub(p) };
            let horizon = horizon.unwrap_or(available);
            if y.len() < m.spec.n {
                return Err(CliError::input(format!("need {} initial outputs, data has {}", m.spec.n, y.len())));
            }
            let preds = m.simulate_noe(&u, &y, horizon)?;
            let index: Vec<String> = (p..p + horizon).map(|k| k.to_string()).collect();
            prediction_csv(
                "k",
                &index,
                &single_band(&preds, m.noise_variance()),
                flags.quantiles,
                flags.observation_noise,
            )?
        }
        Loaded::Gpss(_) | Loaded::Basis(_) => {
            let model = state_model(&loaded).expect("state-space model");
            let names = table.state_columns();
            if names.len() != model.state_dim() {
                return Err(CliError::input(format!(
                    "model has {} state columns, data has {}",
                    model.state_dim(),
                    names.len()
                )));
            }
            let x0 = names
                .iter()
                .map(|n| table.dense_range(n, 0..1.min(table.rows())).map(|v| v.first().copied()))
                .collect::<CliResult<Option<Vec<f64>>>>()?
                .ok_or_else(|| CliError::input("data has no rows: the first row supplies x0"))?;
            let u = if model.uses_input() {
                let col = table.column("u")?;
                let present = col.iter().take_while(|v| v.is_some()).count();
                Some(table.dense_range("u", 0..present)?)
            } else {
                None
            };
            let default = match &u {
                Some(u) => u.len(),
                None => table.rows().saturating_sub(1),
            };
            let horizon = horizon.unwrap_or(default);
            let sim_mode = match mode {
                SimulateMode::Mean => SimMode::Mean,
                SimulateMode::Sample => SimMode::Sample(require_seed(seed, "sampled simulation")?),
            };
            let traj = simulate(model, &x0, u.as_deref(), horizon, sim_mode)?;
            trajectory_csv(&traj)?
        }
    };
    write_output(io.out, &bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalChoice {
    OneStep,
    FreeRun,
    Filter,
}

fn metric_lines(mode: &str, m: &gpsysid_core::Metrics) -> Vec<String> {
    vec![
        format!("mode={mode}"),
        format!("count={}", m.count),
        format!("rmse={}", fmt_f64(m.rmse)),
        format!("mae={}", fmt_f64(m.mae)),
        format!("coverage95={}", fmt_f64(m.coverage95)),
        format!("nlpd={}", fmt_f64(m.nlpd)),
    ]
}

pub fn eval(model_path: &Path, data: &Path, choice: Option<EvalChoice>, seed: Option<u64>, io: &Io) -> CliResult<()> {
    let file = ModelFile::read(model_path)?;
    let seed = seed.or(file.seed);
    let loaded = file.load()?;
    let table = Table::read(data)?;
    let kind = file.config.kind;
    let lines = match &loaded {
        Loaded::Gp(_) | Loaded::Temporal(_) => {
            if choice.is_some_and(|c| c != EvalChoice::OneStep) {
                return Err(CliError::input(format!("kind {kind} supports only --mode one-step")));
            }
            let (t, y) = model::series(&table)?;
            let (preds, noise) = match &loaded {
                Loaded::Gp(gp) => {
                    let post = gp.predict(&Matrix::column(&t), false)?;
                    (post.mean.iter().copied().zip(post.variances()).collect::<Vec<_>>(), gp.noise_variance())
                }
                Loaded::Temporal(tgp) => {
                    let post = tgp.predict(&t)?;
                    (post.mean.into_iter().zip(post.variance).collect(), tgp.noise_variance)
                }
                _ => unreachable!(),
            };
            metric_lines("one-step", &metrics(&preds, &y, noise))
        }
        Loaded::Lag(m) => {
            let default = if kind == ModelKind::Noe { EvalChoice::FreeRun } else { EvalChoice::OneStep };
            let (mode, name) = match choice.unwrap_or(default) {
                EvalChoice::OneStep => (EvalMode::OneStep, "one-step"),
                EvalChoice::FreeRun => (EvalMode::FreeRun, "free-run"),
                EvalChoice::Filter => return Err(CliError::input("lag models have no filter mode")),
            };
            let records = lag_records(m, &table)?;
            metric_lines(name, &m.evaluate(&records, mode)?)
        }
        Loaded::Gpss(_) | Loaded::Basis(_) => {
            let model = state_model(&loaded).expect("state-space model");
            match choice.unwrap_or(EvalChoice::OneStep) {
                EvalChoice::OneStep => {
                    let traj = model::trajectory(&table)?;
                    let (preds, index) = state_one_step(model, &table)?;
                    let q = model.process_noise_var();
                    let mut all = Vec::new();
                    let mut truth = Vec::new();
                    for (j, p) in preds.iter().enumerate() {
                        for (i, &(mean, var)) in p.iter().enumerate() {
                            let k = index[i];
                            if k <= traj.len() {
                                all.push((mean, var + q[j]));
                                truth.push(traj.state(k)[j]);
                            }
                        }
                    }
                    metric_lines("one-step", &metrics(&all, &truth, 0.0))
                }
                EvalChoice::FreeRun => {
                    let traj = model::trajectory(&table)?;
                    let sim = simulate(model, traj.state(0), traj.inputs(), traj.len(), SimMode::Mean)?;
                    let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
                    for k in 1..=traj.len() {
                        for (a, b) in sim.state(k).iter().zip(traj.state(k)) {
                            se += (a - b) * (a - b);
                            ae += (a - b).abs();
                            count += 1;
                        }
                    }
                    vec![
                        "mode=free-run".into(),
                        format!("count={count}"),
                        format!("rmse={}", fmt_f64((se / count as f64).sqrt())),
                        format!("mae={}", fmt_f64(ae / count as f64)),
                    ]
                }
                EvalChoice::Filter => filter_lines(model, &file.config, &table, require_seed(seed, "particle filtering")?)?,
            }
        }
    };
    let mut text = lines.join("\n");
    text.push('\n');
    write_output(io.out, text.as_bytes())
}

/// Output-only evaluation with the bootstrap particle filter. The first
/// row's states centre the initial prior; later states, when present, are
/// only used to score the filtered means.
fn filter_lines(model: &dyn StateSpaceModel, config: &RunConfig, table: &Table, seed: u64) -> CliResult<Vec<String>> {
    let names = table.state_columns();
    if names.len() != model.state_dim() {
        return Err(CliError::input(format!(
            "model has {} state columns, data has {}",
            model.state_dim(),
            names.len()
        )));
    }
    let rows = table.rows();
    if rows < 2 {
        return Err(CliError::input("filtering needs at least 2 rows"));
    }
    let x0 = names
        .iter()
        .map(|n| table.dense_range(n, 0..1).map(|v| v[0]))
        .collect::<CliResult<Vec<f64>>>()?;
    let y = table.dense_range("y", 1..rows)?;
    let u = if model.uses_input() { Some(table.dense_range("u", 0..rows - 1)?) } else { None };
    let prior = StatePrior {
        mean: x0,
        variance: vec![config.particles.init_var; names.len()],
    };
    let out = bootstrap_pf(model, &y, u.as_deref(), &prior, config.particles.count, seed)?;
    let n = y.len();
    let mut lines = vec![
        "mode=filter".into(),
        format!("count={n}"),
        format!("particles={}", config.particles.count),
        format!("log_likelihood={}", fmt_f64(out.log_likelihood)),
        format!("nll_per_step={}", fmt_f64(-out.log_likelihood / n as f64)),
        format!("ess_min={}", fmt_f64(out.ess.iter().copied().fold(f64::INFINITY, f64::min))),
        format!("resampled={}", out.resampled.iter().filter(|b| **b).count()),
    ];
    let cols: Vec<&[Option<f64>]> = names.iter().map(|n| table.column(n)).collect::<CliResult<_>>()?;
    let known = (1..rows).all(|k| cols.iter().all(|c| c[k].is_some()));
    if known {
        let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
        for k in 1..rows {
            for (j, c) in cols.iter().enumerate() {
                let e = out.means[k - 1][j] - c[k].expect("checked");
                se += e * e;
                ae += e.abs();
                count += 1;
            }
        }
        lines.push(format!("state_rmse={}", fmt_f64((se / count as f64).sqrt())));
        lines.push(format!("state_mae={}", fmt_f64(ae / count as f64)));
    }
    Ok(lines)
}
