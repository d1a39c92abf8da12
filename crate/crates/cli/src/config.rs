//! Run configuration: a TOML file with top-level keys and kind-scoped
//! sections. Unknown keys anywhere are errors.

use std::fmt;
use std::path::Path;

use gpsysid_core::gp::LOG_HYPER_LIMIT;
use gpsysid_core::{GpFitOptions, HyperVector, KernelFamily, LagSpec, OptimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gp,
    Nfir,
    Narx,
    Noe,
    Temporal,
    Gpss,
    GpssBasis,
}

impl ModelKind {
    pub fn is_lag(self) -> bool {
        matches!(self, ModelKind::Nfir | ModelKind::Narx | ModelKind::Noe)
    }

    pub fn is_state_space(self) -> bool {
        matches!(self, ModelKind::Gpss | ModelKind::GpssBasis)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_family")]
    pub family: KernelFamily,
    pub magnitude: Option<f64>,
    pub lengthscale: Option<f64>,
    pub noise_std: Option<f64>,
}

fn default_family() -> KernelFamily {
    KernelFamily::SquaredExponential
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            family: default_family(),
            magnitude: None,
            lengthscale: None,
            noise_std: None,
        }
    }
}

impl KernelSection {
    /// All three hyperparameters, none, or an error naming the gap.
    pub fn hyper(&self) -> CliResult<Option<HyperVector>> {
        match (self.magnitude, self.lengthscale, self.noise_std) {
            (None, None, None) => Ok(None),
            (Some(s), Some(l), Some(n)) => {
                for (name, v) in [("magnitude", s), ("lengthscale", l), ("noise_std", n)] {
                    if !(v > 0.0 && v.is_finite() && v.ln().abs() <= LOG_HYPER_LIMIT) {
                        return Err(CliError::input(format!(
                            "kernel.{name} must lie in [e^-{LOG_HYPER_LIMIT}, e^{LOG_HYPER_LIMIT}], got {v}"
                        )));
                    }
                }
                Ok(Some(HyperVector::from_natural(s, l, n)))
            }
            _ => Err(CliError::input(
                "kernel.magnitude, kernel.lengthscale and kernel.noise_std must be given together",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagSection {
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn yes() -> bool {
    true
}

fn default_max_iter() -> usize {
    OptimConfig::default().max_iter
}

fn default_grad_tol() -> f64 {
    OptimConfig::default().grad_tol
}

fn default_restarts() -> usize {
    OptimConfig::default().restarts
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            enabled: true,
            max_iter: default_max_iter(),
            grad_tol: default_grad_tol(),
            restarts: default_restarts(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    /// Domain bounds over (x_1, …, x_d[, u]).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Basis functions per dimension; S is their product.
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    #[serde(default = "default_particles")]
    pub count: usize,
    /// Variance of the initial-state prior around the first recorded state.
    #[serde(default)]
    pub init_var: f64,
}

fn default_particles() -> usize {
    1000
}

impl Default for ParticleSection {
    fn default() -> Self {
        ParticleSection {
            count: default_particles(),
            init_var: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ModelKind,
    pub seed: Option<u64>,
    /// z-score outputs and inputs before lag embedding.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub kernel: KernelSection,
    pub lags: Option<LagSection>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub basis: Option<BasisSection>,
    #[serde(default)]
    pub particles: ParticleSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::input(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    /// Kind-specific requirements.
    pub fn validate(&self) -> CliResult<()> {
        let hyper = self.kernel.hyper()?;
        if !self.optimizer.enabled && hyper.is_none() {
            return Err(CliError::input(
                "optimizer disabled: kernel.magnitude, kernel.lengthscale and kernel.noise_std are required",
            ));
        }
        if self.optimizer.enabled && (self.optimizer.max_iter == 0 || self.optimizer.restarts == 0) {
            return Err(CliError::input("optimizer.max_iter and optimizer.restarts must be at least 1"));
        }
        if self.kind.is_lag() {
            self.lag_spec()?;
        } else if self.lags.is_some() {
            return Err(CliError::input(format!("[lags] does not apply to kind {}", self.kind)));
        }
        if self.kind == ModelKind::Temporal && self.kernel.family.smoothness().is_none() {
            return Err(CliError::input("kind temporal needs a Matérn kernel.family"));
        }
        if self.normalize && !self.kind.is_lag() {
            return Err(CliError::input(format!("normalize only applies to lag models, not {}", self.kind)));
        }
        match (&self.basis, self.kind) {
            (None, ModelKind::GpssBasis) => return Err(CliError::input("kind gpss-basis needs a [basis] section")),
            (Some(_), k) if k != ModelKind::GpssBasis => {
                return Err(CliError::input(format!("[basis] does not apply to kind {k}")))
            }
            (Some(b), _) if b.lower.len() != b.upper.len() || b.lower.len() != b.counts.len() => {
                return Err(CliError::input("basis.lower, basis.upper and basis.counts differ in length"));
            }
            _ => {}
        }
        if self.particles.count < 2 || !(self.particles.init_var >= 0.0) {
            return Err(CliError::input("particles.count must be at least 2 and particles.init_var nonnegative"));
        }
        Ok(())
    }

    pub fn lag_spec(&self) -> CliResult<LagSpec> {
        let lags = self
            .lags
            .as_ref()
            .ok_or_else(|| CliError::input(format!("kind {} needs a [lags] section", self.kind)))?;
        match self.kind {
            ModelKind::Nfir if lags.n != 0 => Err(CliError::input("nfir models take no output lags (lags.n = 0)")),
            ModelKind::Narx | ModelKind::Noe if lags.n == 0 => {
                Err(CliError::input(format!("kind {} needs lags.n >= 1", self.kind)))
            }
            _ => LagSpec::new(lags.n, lags.m).map_err(CliError::from),
        }
    }

    /// Whether fitting draws random numbers (optimizer restarts).
    pub fn fit_is_stochastic(&self) -> bool {
        self.optimizer.enabled && self.optimizer.restarts > 1 && self.kind != ModelKind::Temporal
    }

    pub fn gp_options(&self, seed: Option<u64>) -> CliResult<GpFitOptions> {
        let init = self.kernel.hyper()?;
        let optimizer = if self.optimizer.enabled {
            let seed = if self.fit_is_stochastic() { require_seed(seed, "optimizer restarts")? } else { 0 };
            Some(OptimConfig {
                max_iter: self.optimizer.max_iter,
                grad_tol: self.optimizer.grad_tol,
                restarts: self.optimizer.restarts,
                seed,
            })
        } else {
            None
        };
        Ok(GpFitOptions {
            family: self.kernel.family,
            mean: Default::default(),
            init,
            optimizer,
        })
    }

    /// SHA-256 of the canonical JSON form, with the effective seed.
    pub fn hash(&self, seed: Option<u64>) -> String {
        let mut resolved = self.clone();
        resolved.seed = seed;
        let json = serde_json::to_string(&resolved).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub fn require_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::input(format!("{what} needs a seed: pass --seed or set seed in the config")))
}
