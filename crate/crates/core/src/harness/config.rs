//! Experiment configuration: TOML schema and validated specs.
//!
//! Config files are TOML documents with a `schema_version` key and sections
//! for the mechanism, the population, optional suite parameters, and an
//! optional sweep grid. See the repository README for the full schema and
//! `configs/` for ready-to-run examples.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::agents::DecisionStrategy;
use crate::mechanism::MechanismConfig;
use crate::population::{Cell, PopulationModel, SamplingMode, TypeUniverse};

/// The config schema this build reads.
pub const SUPPORTED_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// TOML-level failure; the message names the offending field or line.
    #[error("config parse error: {0}")]
    Parse(String),
    /// Well-formed TOML with out-of-contract values; names the field.
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unsupported schema_version {found} (this build reads {supported})")]
    UnsupportedSchema { found: u32, supported: u32 },
}

/// Verification suites the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Accuracy,
    Tails,
    Halting,
    Cost,
    DpAudit,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Accuracy,
        Suite::Tails,
        Suite::Halting,
        Suite::Cost,
        Suite::DpAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Accuracy => "accuracy",
            Suite::Tails => "tails",
            Suite::Halting => "halting",
            Suite::Cost => "cost",
            Suite::DpAudit => "dp_audit",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "accuracy" => Some(Suite::Accuracy),
            "tails" => Some(Suite::Tails),
            "halting" => Some(Suite::Halting),
            "cost" => Some(Suite::Cost),
            "dp_audit" => Some(Suite::DpAudit),
            _ => None,
        }
    }
}

/// Tunables for the verification suites, all with reproducible defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteParams {
    /// Accuracy failure-probability bound (the accuracy definition's
    /// constant).
    pub failure_threshold: f64,
    /// Per-lemma violation bound before statistical slack.
    pub lemma_bound: f64,
    /// Upper bound accepted by the cost suite on the benchmark ratio.
    pub cost_max_ratio: f64,
    /// Largest `k` checked by the halting-tail suite.
    pub halting_max_k: u32,
    /// Runs per arm in the empirical privacy audit.
    pub audit_runs_per_arm: u64,
    /// Epoch horizon for audit binning.
    pub audit_max_epochs: u32,
    /// Half-width of the audit's noisy-count offset window, in unit bins.
    pub audit_offset_window: i64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            failure_threshold: 1.0 / 3.0,
            lemma_bound: 1.0 / 12.0,
            // The additive cost floor carries the epoch-budget constant: a
            // free population already costs ≈ C·(1+η) = 110 per 1/α², so the
            // default bound sits above that.
            cost_max_ratio: 150.0,
            halting_max_k: 10,
            audit_runs_per_arm: 100_000,
            audit_max_epochs: 32,
            audit_offset_window: 64,
        }
    }
}

/// A fully validated experiment: mechanism, population, batch size, seed,
/// and the suites to run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub mechanism: MechanismConfig,
    pub population: PopulationModel,
    pub trials: u64,
    pub master_seed: u64,
    pub suites: Vec<Suite>,
    pub params: SuiteParams,
}

impl ExperimentSpec {
    pub fn new(
        mechanism: MechanismConfig,
        population: PopulationModel,
        trials: u64,
        master_seed: u64,
    ) -> Result<Self, ConfigError> {
        if trials == 0 {
            return Err(ConfigError::Invalid(
                "trials must be at least 1 (field: suites.trials)".into(),
            ));
        }
        Ok(Self {
            mechanism,
            population,
            trials,
            master_seed,
            suites: Suite::ALL.to_vec(),
            params: SuiteParams::default(),
        })
    }

    pub fn with_suites(mut self, suites: Vec<Suite>) -> Self {
        self.suites = suites;
        self
    }

    pub fn with_params(mut self, params: SuiteParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Result<Self, ConfigError> {
        if trials == 0 {
            return Err(ConfigError::Invalid(
                "trials must be at least 1 (field: --trials)".into(),
            ));
        }
        self.trials = trials;
        Ok(self)
    }
}

/// Sweep grid: one experiment cell per `(alpha, eta, value)` combination,
/// where `value` replaces every population cell's cost value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub etas: Vec<f64>,
    pub values: Vec<f64>,
    pub trials: u64,
}

/// A parsed config file: the experiment plus the optional sweep grid.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub spec: ExperimentSpec,
    pub sweep: Option<SweepGrid>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    mechanism: RawMechanism,
    population: RawPopulation,
    #[serde(default)]
    suites: Option<RawSuites>,
    #[serde(default)]
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMechanism {
    alpha: f64,
    #[serde(default)]
    eta: Option<f64>,
    eps0: Option<f64>,
    epoch_constant: Option<f64>,
    participation_target: Option<f64>,
    base_price: Option<f64>,
    max_epochs: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    #[serde(default)]
    mode: Option<String>,
    pool_size: Option<usize>,
    #[serde(default)]
    strategy: Option<String>,
    accept_probability: Option<f64>,
    types: Vec<RawType>,
    cells: Vec<RawCell>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawType {
    name: String,
    q: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    mass: f64,
    #[serde(rename = "type")]
    type_name: String,
    v: f64,
    #[serde(default)]
    kappa: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuites {
    #[serde(default)]
    run: Option<Vec<String>>,
    trials: Option<u64>,
    failure_threshold: Option<f64>,
    cost_max_ratio: Option<f64>,
    halting_max_k: Option<u32>,
    audit_runs_per_arm: Option<u64>,
    audit_max_epochs: Option<u32>,
    audit_offset_window: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    alphas: Vec<f64>,
    etas: Vec<f64>,
    values: Vec<f64>,
    trials: Option<u64>,
}

fn build_mechanism(raw: &RawMechanism) -> Result<MechanismConfig, ConfigError> {
    let wrap = |e: crate::mechanism::MechanismError, field: &str| {
        ConfigError::Invalid(format!("{e} (field: mechanism.{field})"))
    };
    // Default price-growth rate sits inside the halting analysis's
    // admissible band (below 3/17).
    let eta = raw.eta.unwrap_or(0.1);
    let mut config = MechanismConfig::new(raw.alpha, eta).map_err(|e| wrap(e, "alpha/eta"))?;
    if let Some(eps0) = raw.eps0 {
        config = config.with_eps0(eps0).map_err(|e| wrap(e, "eps0"))?;
    }
    if let Some(c) = raw.epoch_constant {
        config = config
            .with_epoch_constant(c)
            .map_err(|e| wrap(e, "epoch_constant"))?;
    }
    if let Some(t) = raw.participation_target {
        config = config
            .with_participation_target(t)
            .map_err(|e| wrap(e, "participation_target"))?;
    }
    if let Some(b) = raw.base_price {
        config = config
            .with_base_price(b)
            .map_err(|e| wrap(e, "base_price"))?;
    }
    if let Some(m) = raw.max_epochs {
        config = config
            .with_max_epochs(m)
            .map_err(|e| wrap(e, "max_epochs"))?;
    }
    Ok(config)
}

fn build_population(raw: &RawPopulation) -> Result<PopulationModel, ConfigError> {
    let universe = TypeUniverse::new(
        raw.types
            .iter()
            .map(|t| (t.name.clone(), t.q))
            .collect::<Vec<_>>(),
    )
    .map_err(|e| ConfigError::Invalid(format!("{e} (field: population.types)")))?;

    let mut cells = Vec::with_capacity(raw.cells.len());
    for (i, cell) in raw.cells.iter().enumerate() {
        let type_id = universe.id_of(&cell.type_name).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "unknown type {:?} (field: population.cells[{i}].type)",
                cell.type_name
            ))
        })?;
        cells.push(Cell {
            mass: cell.mass,
            type_id,
            value: cell.v,
            kappa: cell.kappa,
        });
    }

    let mode = match raw.mode.as_deref() {
        None | Some("infinite") => SamplingMode::InfiniteIid,
        Some("finite") => {
            let size = raw.pool_size.ok_or_else(|| {
                ConfigError::Invalid(
                    "finite mode requires pool_size (field: population.pool_size)".into(),
                )
            })?;
            SamplingMode::FinitePool { size }
        }
        Some(other) => {
            return Err(ConfigError::Invalid(format!(
                "mode must be \"infinite\" or \"finite\", got {other:?} (field: population.mode)"
            )))
        }
    };

    let strategy = match raw.strategy.as_deref() {
        None | Some("rational") => DecisionStrategy::RationalThreshold,
        Some("exact-utility") => DecisionStrategy::ExactUtilityMax,
        Some("sub-threshold") => DecisionStrategy::SubThreshold {
            accept_probability: raw.accept_probability.unwrap_or(0.0),
        },
        Some(other) => {
            return Err(ConfigError::Invalid(format!(
                "strategy must be \"rational\", \"exact-utility\", or \"sub-threshold\", \
                 got {other:?} (field: population.strategy)"
            )))
        }
    };
    if let DecisionStrategy::SubThreshold { accept_probability } = strategy {
        if !(accept_probability.is_finite() && (0.0..=1.0).contains(&accept_probability)) {
            return Err(ConfigError::Invalid(format!(
                "accept_probability must lie in [0, 1], got {accept_probability} \
                 (field: population.accept_probability)"
            )));
        }
    }

    let model = PopulationModel::new(universe, cells, mode)
        .map_err(|e| ConfigError::Invalid(format!("{e} (field: population.cells)")))?;
    Ok(model.with_strategy(strategy))
}

fn build_suites(raw: Option<&RawSuites>) -> Result<(Vec<Suite>, u64, SuiteParams), ConfigError> {
    let mut params = SuiteParams::default();
    let mut trials = 300u64;
    let mut suites = Suite::ALL.to_vec();
    if let Some(raw) = raw {
        if let Some(names) = &raw.run {
            let mut set = BTreeSet::new();
            for name in names {
                let suite = Suite::from_name(name).ok_or_else(|| {
                    ConfigError::Invalid(format!(
                        "unknown suite {name:?} (field: suites.run); expected one of \
                         accuracy, tails, halting, cost, dp_audit"
                    ))
                })?;
                set.insert(suite);
            }
            suites = set.into_iter().collect();
        }
        if let Some(t) = raw.trials {
            trials = t;
        }
        if let Some(f) = raw.failure_threshold {
            if !(f.is_finite() && f > 0.0 && f < 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "failure_threshold must lie in (0, 1), got {f} \
                     (field: suites.failure_threshold)"
                )));
            }
            params.failure_threshold = f;
        }
        if let Some(r) = raw.cost_max_ratio {
            params.cost_max_ratio = r;
        }
        if let Some(k) = raw.halting_max_k {
            params.halting_max_k = k;
        }
        if let Some(n) = raw.audit_runs_per_arm {
            params.audit_runs_per_arm = n;
        }
        if let Some(m) = raw.audit_max_epochs {
            params.audit_max_epochs = m;
        }
        if let Some(w) = raw.audit_offset_window {
            if w <= 0 {
                return Err(ConfigError::Invalid(format!(
                    "audit_offset_window must be positive, got {w} \
                     (field: suites.audit_offset_window)"
                )));
            }
            params.audit_offset_window = w;
        }
    }
    Ok((suites, trials, params))
}

/// Parses a config document.
pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if raw.schema_version != SUPPORTED_SCHEMA_VERSION {
        return Err(ConfigError::UnsupportedSchema {
            found: raw.schema_version,
            supported: SUPPORTED_SCHEMA_VERSION,
        });
    }
    let mechanism = build_mechanism(&raw.mechanism)?;
    let population = build_population(&raw.population)?;
    let (suites, trials, params) = build_suites(raw.suites.as_ref())?;
    let spec = ExperimentSpec::new(mechanism, population, trials, 0)?
        .with_suites(suites)
        .with_params(params);
    let sweep = match raw.sweep {
        Some(raw_sweep) => {
            if raw_sweep.alphas.is_empty()
                || raw_sweep.etas.is_empty()
                || raw_sweep.values.is_empty()
            {
                return Err(ConfigError::Invalid(
                    "sweep grids need non-empty alphas, etas, and values (field: sweep)".into(),
                ));
            }
            Some(SweepGrid {
                alphas: raw_sweep.alphas,
                etas: raw_sweep.etas,
                values: raw_sweep.values,
                trials: raw_sweep.trials.unwrap_or(trials),
            })
        }
        None => None,
    };
    Ok(LoadedConfig { spec, sweep })
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[mechanism]
alpha = 0.5
eta = 0.1

[population]
types = [ { name = "positive", q = 1.0 }, { name = "negative", q = 0.0 } ]
cells = [
  { mass = 0.3, type = "positive", v = 0.0 },
  { mass = 0.7, type = "negative", v = 0.0 },
]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let loaded = parse_config(MINIMAL).unwrap();
        assert_eq!(loaded.spec.mechanism.alpha(), 0.5);
        assert_eq!(loaded.spec.mechanism.eps0(), 0.5);
        assert_eq!(loaded.spec.trials, 300);
        assert_eq!(loaded.spec.suites, Suite::ALL.to_vec());
        assert!((loaded.spec.population.true_statistic() - 0.3).abs() < 1e-12);
        assert!(loaded.sweep.is_none());
    }

    #[test]
    fn unknown_field_is_named_in_the_error() {
        let bad = MINIMAL.replace("eta = 0.1", "eta = 0.1\nbogus_knob = 3");
        let err = parse_config(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus_knob"), "message was: {msg}");
    }

    #[test]
    fn invalid_value_is_named_in_the_error() {
        let bad = MINIMAL.replace("alpha = 0.5", "alpha = 1.5");
        let err = parse_config(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha"), "message was: {msg}");
    }

    #[test]
    fn unknown_type_reference_is_rejected() {
        let bad = MINIMAL.replace("type = \"negative\"", "type = \"missing\"");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        let err = parse_config(&bad).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::UnsupportedSchema { found: 9, .. }
        ));
    }

    #[test]
    fn suites_and_sweep_sections_parse() {
        let text = format!(
            "{MINIMAL}\n[suites]\nrun = [\"accuracy\", \"cost\"]\ntrials = 50\n\
             cost_max_ratio = 12.5\n\n[sweep]\nalphas = [0.4]\netas = [0.1]\n\
             values = [1.0, 10.0]\ntrials = 7\n"
        );
        let loaded = parse_config(&text).unwrap();
        assert_eq!(loaded.spec.suites, vec![Suite::Accuracy, Suite::Cost]);
        assert_eq!(loaded.spec.trials, 50);
        assert_eq!(loaded.spec.params.cost_max_ratio, 12.5);
        let sweep = loaded.sweep.unwrap();
        assert_eq!(sweep.values, vec![1.0, 10.0]);
        assert_eq!(sweep.trials, 7);
    }

    #[test]
    fn eta_defaults_into_the_admissible_band() {
        let text = MINIMAL.replace(
            "eta = 0.1
",
            "",
        );
        let loaded = parse_config(&text).unwrap();
        assert_eq!(loaded.spec.mechanism.eta(), 0.1);
    }

    #[test]
    fn finite_mode_requires_pool_size() {
        let bad = MINIMAL.replace("[population]", "[population]\nmode = \"finite\"");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("pool_size"));
    }
}
