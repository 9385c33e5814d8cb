//! Experiment configuration.
//!
//! Values are resolved in layers: scenario defaults (depending on the
//! profile), then a TOML file, then `DDOPT_SEED`, then `key=value`
//! overrides. Every key of a layer must already exist in the defaults, so
//! typos are reported instead of ignored.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::optimizers::{Algorithm, SensitivityMode};
use crate::transport::CategoricalMetric;

pub const SEED_ENV: &str = "DDOPT_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Polarized,
    Recommender,
    RateSweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Polarized => "polarized",
            Scenario::Recommender => "recommender",
            Scenario::RateSweep => "rate_sweep",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polarized" => Ok(Scenario::Polarized),
            "recommender" => Ok(Scenario::Recommender),
            "rate_sweep" => Ok(Scenario::RateSweep),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected polarized, recommender or rate_sweep)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Desk-scale: the polarized population is halved to 500.
    #[default]
    Fast,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Profile::Fast),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected fast or paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenario: Scenario,
    pub profile: Profile,
    pub seed: u64,
    /// Trials of the sampled algorithms (dfo uses `dfo.trials`).
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub horizon: usize,
    pub output: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    pub size: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSection {
    Polarized {
        lambda: f64,
        sigma: f64,
    },
    Softmax {
        lambda1: f64,
        lambda2: f64,
        epsilon: f64,
    },
    /// Random instance: `A` with spectral norm `spectral_norm`, Gaussian `B`
    /// scaled by `input_scale`, `E = exo_scale I`.
    Linear {
        decision_dim: usize,
        spectral_norm: f64,
        input_scale: f64,
        exo_scale: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSection {
    Affinity,
    GainEntropy { rho: f64 },
    /// Gaussian targets with standard deviation `target_scale`.
    Quadratic { target_scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSection {
    NormBall { radius: f64 },
    CappedSimplex { budget: f64, cap: f64 },
    Unconstrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub eta: f64,
    pub n_mb: usize,
    pub sensitivity: SensitivityMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DfoSection {
    pub eta: f64,
    pub delta: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub ss_tol: f64,
    pub ss_max_iter: usize,
    /// Atoms of the population W1 diagnostic.
    pub w1_atoms: usize,
    pub w1_stride: usize,
    pub histogram_bins: usize,
    /// Ground metric of the recommender W1.
    pub ground_metric: CategoricalMetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub horizons: Vec<usize>,
    /// Step size at horizon T is `eta0 * T^(-eta_exponent)`.
    pub eta0: f64,
    pub eta_exponent: f64,
    /// Use exact full-population gradients instead of mini-batches.
    pub noise_free: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub population: PopulationSection,
    pub dynamics: DynamicsSection,
    pub objective: ObjectiveSection,
    pub constraint: ConstraintSection,
    pub optimizer: OptimizerSection,
    pub dfo: DfoSection,
    pub oracle: OracleSection,
    pub diagnostics: DiagnosticsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// A resolved configuration together with the overrides that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// `key=value` overrides as applied, with keys fully qualified.
    pub overrides: Vec<(String, String)>,
    pub seed_from_env: Option<u64>,
}

impl ExperimentConfig {
    pub fn defaults(scenario: Scenario, profile: Profile) -> Self {
        let diagnostics = DiagnosticsSection {
            ss_tol: 1e-10,
            ss_max_iter: 100_000,
            w1_atoms: 50,
            w1_stride: 10,
            histogram_bins: 18,
            ground_metric: CategoricalMetric::Index,
        };
        let oracle = OracleSection {
            restarts: 10,
            max_iter: 5000,
            tol: 1e-8,
        };
        let dfo = DfoSection {
            eta: 0.1,
            delta: 2.0,
            trials: 20,
        };
        match scenario {
            Scenario::Polarized => Self {
                experiment: ExperimentSection {
                    scenario,
                    profile,
                    seed: 1,
                    trials: 20,
                    algorithms: vec![Algorithm::Vanilla, Algorithm::Composite],
                    horizon: 2000,
                    output: "results/polarized".into(),
                },
                population: PopulationSection {
                    size: match profile {
                        Profile::Fast => 500,
                        Profile::Paper => 1000,
                    },
                    dim: 20,
                },
                dynamics: DynamicsSection::Polarized { lambda: 0.4, sigma: 0.5 },
                objective: ObjectiveSection::Affinity,
                constraint: ConstraintSection::NormBall { radius: 1.0 },
                optimizer: OptimizerSection {
                    eta: 5e-3,
                    n_mb: 50,
                    sensitivity: SensitivityMode::OnlineApprox,
                },
                dfo,
                oracle,
                diagnostics,
                sweep: None,
            },
            Scenario::Recommender => Self {
                experiment: ExperimentSection {
                    scenario,
                    profile,
                    seed: 1,
                    trials: 1,
                    algorithms: vec![Algorithm::Vanilla, Algorithm::Composite, Algorithm::Dfo],
                    horizon: 500,
                    output: "results/recommender".into(),
                },
                population: PopulationSection { size: 1, dim: 100 },
                dynamics: DynamicsSection::Softmax {
                    lambda1: 0.2,
                    lambda2: 0.5,
                    epsilon: 0.5,
                },
                objective: ObjectiveSection::GainEntropy { rho: 0.1 },
                constraint: ConstraintSection::CappedSimplex { budget: 250.0, cap: 5.0 },
                optimizer: OptimizerSection {
                    eta: 0.5,
                    n_mb: 1,
                    sensitivity: SensitivityMode::OnlineApprox,
                },
                dfo,
                oracle,
                diagnostics: DiagnosticsSection {
                    w1_atoms: 1,
                    w1_stride: 1,
                    ..diagnostics
                },
                sweep: None,
            },
            Scenario::RateSweep => Self {
                experiment: ExperimentSection {
                    scenario,
                    profile,
                    seed: 1,
                    trials: 10,
                    algorithms: vec![Algorithm::Composite],
                    horizon: 400,
                    output: "results/rate_sweep".into(),
                },
                population: PopulationSection { size: 200, dim: 4 },
                dynamics: DynamicsSection::Linear {
                    decision_dim: 3,
                    spectral_norm: 0.5,
                    input_scale: 1.0,
                    exo_scale: 1.0,
                },
                objective: ObjectiveSection::Quadratic { target_scale: 1.0 },
                constraint: ConstraintSection::Unconstrained,
                optimizer: OptimizerSection {
                    eta: 0.1,
                    n_mb: 5,
                    sensitivity: SensitivityMode::OnlineApprox,
                },
                dfo,
                oracle,
                diagnostics: DiagnosticsSection {
                    w1_atoms: 20,
                    w1_stride: 50,
                    ..diagnostics
                },
                sweep: Some(SweepSection {
                    horizons: vec![400, 1600, 6400],
                    eta0: 2.0,
                    eta_exponent: 0.5,
                    noise_free: false,
                }),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        let e = &self.experiment;
        if e.algorithms.is_empty() {
            return cfg("experiment.algorithms must not be empty".into());
        }
        if e.trials == 0 {
            return cfg("experiment.trials must be positive".into());
        }
        if e.seed > i64::MAX as u64 {
            return cfg(format!("experiment.seed must be at most {}", i64::MAX));
        }
        if self.population.size == 0 || self.population.dim == 0 {
            return cfg("population.size and population.dim must be positive".into());
        }
        let model_ok = matches!(
            (e.scenario, &self.dynamics),
            (Scenario::Polarized, DynamicsSection::Polarized { .. })
                | (Scenario::Recommender, DynamicsSection::Softmax { .. })
                | (Scenario::RateSweep, DynamicsSection::Linear { .. })
        );
        if !model_ok {
            return cfg(format!("scenario {} does not use this dynamics model", e.scenario));
        }
        let positive = |name: &str, x: f64| -> Result<()> {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
            }
        };
        positive("optimizer.eta", self.optimizer.eta)?;
        positive("dfo.eta", self.dfo.eta)?;
        positive("dfo.delta", self.dfo.delta)?;
        positive("oracle.tol", self.oracle.tol)?;
        positive("diagnostics.ss_tol", self.diagnostics.ss_tol)?;
        if self.optimizer.n_mb == 0 || self.optimizer.n_mb > self.population.size {
            return cfg(format!(
                "optimizer.n_mb must be in 1..={}, got {}",
                self.population.size, self.optimizer.n_mb
            ));
        }
        if e.algorithms.contains(&Algorithm::Dfo) && self.dfo.trials == 0 {
            return cfg("dfo.trials must be positive".into());
        }
        for (name, v) in [
            ("oracle.restarts", self.oracle.restarts),
            ("oracle.max_iter", self.oracle.max_iter),
            ("diagnostics.ss_max_iter", self.diagnostics.ss_max_iter),
            ("diagnostics.w1_stride", self.diagnostics.w1_stride),
            ("diagnostics.histogram_bins", self.diagnostics.histogram_bins),
        ] {
            if v == 0 {
                return cfg(format!("{name} must be positive"));
            }
        }
        match self.dynamics {
            DynamicsSection::Polarized { lambda, sigma } => {
                positive("dynamics.sigma", sigma)?;
                if !(0.0..1.0).contains(&lambda) {
                    return cfg(format!("dynamics.lambda must be in [0, 1), got {lambda}"));
                }
            }
            DynamicsSection::Softmax { lambda1, lambda2, epsilon } => {
                positive("dynamics.lambda2", lambda2)?;
                positive("dynamics.epsilon", epsilon)?;
                if !(lambda1 >= 0.0 && lambda1 + lambda2 <= 1.0) {
                    return cfg("dynamics.lambda1 and lambda2 must be nonnegative with sum at most 1".into());
                }
            }
            DynamicsSection::Linear {
                decision_dim,
                spectral_norm,
                input_scale,
                exo_scale,
            } => {
                if decision_dim == 0 {
                    return cfg("dynamics.decision_dim must be positive".into());
                }
                positive("dynamics.input_scale", input_scale)?;
                positive("dynamics.exo_scale", exo_scale)?;
                if !(spectral_norm > 0.0 && spectral_norm < 1.0) {
                    return cfg(format!("dynamics.spectral_norm must be in (0, 1), got {spectral_norm}"));
                }
            }
        }
        match self.objective {
            ObjectiveSection::GainEntropy { rho } if !(rho >= 0.0) => {
                return cfg(format!("objective.rho must be nonnegative, got {rho}"))
            }
            ObjectiveSection::Quadratic { target_scale } => positive("objective.target_scale", target_scale)?,
            _ => {}
        }
        match self.constraint {
            ConstraintSection::NormBall { radius } => positive("constraint.radius", radius)?,
            ConstraintSection::CappedSimplex { budget, cap } => {
                positive("constraint.budget", budget)?;
                positive("constraint.cap", cap)?;
            }
            ConstraintSection::Unconstrained => {}
        }
        if let Some(s) = &self.sweep {
            positive("sweep.eta0", s.eta0)?;
            if !(s.eta_exponent >= 0.0 && s.eta_exponent.is_finite()) {
                return cfg(format!("sweep.eta_exponent must be nonnegative, got {}", s.eta_exponent));
            }
            if s.horizons.contains(&0) {
                return cfg("sweep.horizons must be positive".into());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

/// Builder for [`LoadedConfig`]; each layer is optional.
#[derive(Clone, Debug, Default)]
pub struct ConfigSources<'a> {
    pub file: Option<&'a Path>,
    pub profile: Option<Profile>,
    pub overrides: &'a [String],
    /// Value of `DDOPT_SEED`, if set.
    pub seed_env: Option<String>,
    /// Scenario to use when neither the file nor the overrides name one.
    pub scenario: Option<Scenario>,
}

impl ConfigSources<'_> {
    /// Reads `DDOPT_SEED` from the process environment.
    pub fn with_env(mut self) -> Self {
        self.seed_env = std::env::var(SEED_ENV).ok();
        self
    }

    pub fn load(&self) -> Result<LoadedConfig> {
        let file_table = match self.file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
                text.parse::<Table>()
                    .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        let parsed: Vec<(String, String)> = self
            .overrides
            .iter()
            .map(|o| split_override(o))
            .collect::<Result<_>>()?;

        let scenario = resolve_scenario(&file_table, &parsed, self.scenario)?;
        let profile = match self.profile {
            Some(p) => p,
            None => match file_table.get("experiment").and_then(|e| e.get("profile")) {
                Some(Value::String(s)) => s.parse()?,
                Some(other) => return Err(Error::Config(format!("experiment.profile must be a string, got {other}"))),
                None => Profile::Fast,
            },
        };

        let defaults = ExperimentConfig::defaults(scenario, profile);
        let mut root = Value::try_from(&defaults)
            .map_err(|e| Error::Config(format!("cannot serialize defaults: {e}")))?;
        let Value::Table(root_table) = &mut root else {
            unreachable!("a config always serializes to a table")
        };
        merge_table(root_table, file_table, "")?;
        set_path(root_table, &["experiment", "profile"], Value::String(profile_name(profile).into()))?;

        let seed_from_env = match &self.seed_env {
            Some(s) => {
                let seed: u64 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got '{s}'")))?;
                let v = i64::try_from(seed)
                    .map_err(|_| Error::Config(format!("{SEED_ENV} must be at most {}", i64::MAX)))?;
                set_path(root_table, &["experiment", "seed"], Value::Integer(v))?;
                Some(seed)
            }
            None => None,
        };

        let mut applied = Vec::with_capacity(parsed.len());
        for (key, raw) in parsed {
            let path = resolve_key(root_table, &key)?;
            let refs: Vec<&str> = path.iter().map(String::as_str).collect();
            set_path(root_table, &refs, parse_value(&raw))?;
            applied.push((path.join("."), raw));
        }

        let config: ExperimentConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid configuration: {}", e.message())))?;
        config.validate()?;
        Ok(LoadedConfig {
            config,
            overrides: applied,
            seed_from_env,
        })
    }
}

fn profile_name(p: Profile) -> &'static str {
    match p {
        Profile::Fast => "fast",
        Profile::Paper => "paper",
    }
}

fn split_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!("override '{s}' is not of the form key=value"))),
    }
}

fn resolve_scenario(file: &Table, overrides: &[(String, String)], fallback: Option<Scenario>) -> Result<Scenario> {
    if let Some((_, v)) = overrides
        .iter()
        .rev()
        .find(|(k, _)| k == "scenario" || k == "experiment.scenario")
    {
        return v.trim_matches('"').parse();
    }
    match file.get("experiment").and_then(|e| e.get("scenario")) {
        Some(Value::String(s)) => s.parse(),
        Some(other) => Err(Error::Config(format!("experiment.scenario must be a string, got {other}"))),
        None => fallback.ok_or_else(|| Error::Config("experiment.scenario is not set".into())),
    }
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Integers are accepted where floats are expected.
fn coerce(default: &Value, new: Value, key: &str) -> Result<Value> {
    match (default, new) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Array(d), Value::Array(items)) => {
            let proto = d.first();
            let items = items
                .into_iter()
                .map(|v| match proto {
                    Some(p) => coerce(p, v, key),
                    None => Ok(v),
                })
                .collect::<Result<_>>()?;
            Ok(Value::Array(items))
        }
        (d, n) if std::mem::discriminant(d) == std::mem::discriminant(&n) => Ok(n),
        (d, n) => Err(Error::Config(format!(
            "{key}: expected {}, got {}",
            d.type_str(),
            n.type_str()
        ))),
    }
}

fn merge_table(base: &mut Table, layer: Table, prefix: &str) -> Result<()> {
    for (k, v) in layer {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let Some(slot) = base.get_mut(&k) else {
            return Err(Error::Config(format!("unknown key '{key}'")));
        };
        match (slot, v) {
            (Value::Table(b), Value::Table(l)) => merge_table(b, l, &key)?,
            (slot, v) => {
                let v = coerce(slot, v, &key)?;
                check_tag(&key, slot, &v)?;
                *slot = v;
            }
        }
    }
    Ok(())
}

/// Model and constraint kinds are fixed by the scenario.
fn check_tag(key: &str, old: &Value, new: &Value) -> Result<()> {
    let is_tag = key.ends_with(".model") || key.ends_with(".kind");
    if is_tag && old != new {
        return Err(Error::Config(format!(
            "{key} is fixed by the scenario to {old}, got {new}"
        )));
    }
    Ok(())
}

fn set_path(root: &mut Table, path: &[&str], value: Value) -> Result<()> {
    let key = path.join(".");
    let (last, sections) = path.split_last().expect("non-empty key path");
    let mut t = root;
    for s in sections {
        t = match t.get_mut(*s) {
            Some(Value::Table(next)) => next,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        };
    }
    let Some(slot) = t.get_mut(*last) else {
        return Err(Error::Config(format!("unknown key '{key}'")));
    };
    if slot.is_table() {
        return Err(Error::Config(format!("'{key}' is a section, not a value")));
    }
    let value = coerce(slot, value, &key)?;
    check_tag(&key, slot, &value)?;
    *slot = value;
    Ok(())
}

/// Section order used to resolve bare keys that occur in several sections.
const SECTION_ORDER: [&str; 10] = [
    "experiment",
    "population",
    "dynamics",
    "objective",
    "constraint",
    "optimizer",
    "sweep",
    "diagnostics",
    "oracle",
    "dfo",
];

/// A dotted key is taken as is; a bare key resolves to the first section
/// (in [`SECTION_ORDER`]) that has it.
fn resolve_key(root: &Table, key: &str) -> Result<Vec<String>> {
    if key.contains('.') {
        return Ok(key.split('.').map(str::to_string).collect());
    }
    SECTION_ORDER
        .iter()
        .find(|s| matches!(root.get(**s), Some(Value::Table(t)) if t.contains_key(key)))
        .map(|s| vec![s.to_string(), key.to_string()])
        .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn load(file: Option<&str>, overrides: &[&str], env: Option<&str>) -> Result<LoadedConfig> {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        if let Some(text) = file {
            tmp.write_all(text.as_bytes()).unwrap();
        }
        let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        ConfigSources {
            file: file.map(|_| tmp.path()),
            profile: None,
            overrides: &owned,
            seed_env: env.map(str::to_string),
            scenario: None,
        }
        .load()
    }

    #[test]
    fn defaults_validate() {
        for s in [Scenario::Polarized, Scenario::Recommender, Scenario::RateSweep] {
            for p in [Profile::Fast, Profile::Paper] {
                ExperimentConfig::defaults(s, p).validate().unwrap();
            }
        }
        assert_eq!(ExperimentConfig::defaults(Scenario::Polarized, Profile::Paper).population.size, 1000);
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        for s in [Scenario::Polarized, Scenario::Recommender, Scenario::RateSweep] {
            let c = ExperimentConfig::defaults(s, Profile::Fast);
            let back: ExperimentConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn layers_apply_in_order() {
        let text = "[experiment]\nscenario = \"polarized\"\nseed = 5\n[optimizer]\neta = 1e-2\n";
        let l = load(Some(text), &[], None).unwrap();
        assert_eq!(l.config.experiment.seed, 5);
        assert_eq!(l.config.optimizer.eta, 1e-2);
        let l = load(Some(text), &["eta=0.02", "experiment.horizon=10"], Some("9")).unwrap();
        assert_eq!(l.config.experiment.seed, 9);
        assert_eq!(l.config.optimizer.eta, 0.02);
        assert_eq!(l.config.experiment.horizon, 10);
        assert_eq!(l.overrides[0], ("optimizer.eta".into(), "0.02".into()));
        assert_eq!(l.seed_from_env, Some(9));
    }

    #[test]
    fn unknown_keys_and_bad_types_are_config_errors() {
        let base = "[experiment]\nscenario = \"recommender\"\n";
        for (file, set) in [
            (format!("{base}[optimizer]\netaa = 1.0\n"), vec![]),
            (format!("{base}[sweep]\neta0 = 1.0\n"), vec![]),
            (base.to_string(), vec!["nonsense=1"]),
            (base.to_string(), vec!["optimizer.eta=\"fast\""]),
            (base.to_string(), vec!["dynamics.model=polarized"]),
            (base.to_string(), vec!["experiment.algorithms=[]"]),
            (base.to_string(), vec!["no_equals_sign"]),
        ] {
            let err = load(Some(&file), &set, None).unwrap_err();
            assert!(err.is_config(), "{file} {set:?}: {err}");
        }
        assert!(load(Some(base), &[], Some("abc")).unwrap_err().is_config());
    }

    #[test]
    fn integers_coerce_to_floats() {
        let l = load(Some("[experiment]\nscenario = \"recommender\"\n[optimizer]\neta = 1\n"), &[], None).unwrap();
        assert_eq!(l.config.optimizer.eta, 1.0);
        let l = load(Some("[experiment]\nscenario = \"rate_sweep\"\n"), &["sweep.horizons=[10, 20, 40]"], None)
            .unwrap();
        assert_eq!(l.config.sweep.unwrap().horizons, vec![10, 20, 40]);
    }

    #[test]
    fn scenario_can_come_from_overrides() {
        let l = load(None, &["scenario=recommender"], None).unwrap();
        assert_eq!(l.config.experiment.scenario, Scenario::Recommender);
        assert!(load(None, &[], None).unwrap_err().is_config());
    }
}
