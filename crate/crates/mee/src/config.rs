//! JSON configuration: model description and per-stage settings.

use std::fs;
use std::path::{Path, PathBuf};

use mee_core::asymptotics::AsymptoticsConfig;
use mee_core::estimator::EstimatorConfig;
use mee_core::hypotest::{QuantileMethod, TestConfig};
use mee_core::{HmmModel, ParameterDomain, SignalFamily, StateOrder};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Poisson,
    GaussianKnownVar { variance: f64 },
    GaussianFull,
    Categorical { symbols: usize },
}

impl From<&FamilySpec> for SignalFamily {
    fn from(f: &FamilySpec) -> Self {
        match *f {
            FamilySpec::Poisson => SignalFamily::Poisson,
            FamilySpec::GaussianKnownVar { variance } => SignalFamily::GaussianKnownVar { variance },
            FamilySpec::GaussianFull => SignalFamily::GaussianFull,
            FamilySpec::Categorical { symbols } => SignalFamily::Categorical { symbols },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSpec {
    Ascending,
    Descending,
    Unordered,
}

impl From<OrderSpec> for StateOrder {
    fn from(o: OrderSpec) -> Self {
        match o {
            OrderSpec::Ascending => StateOrder::Ascending,
            OrderSpec::Descending => StateOrder::Descending,
            OrderSpec::Unordered => StateOrder::Unordered,
        }
    }
}

/// Overrides of the family's default parameter domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub beta_lo: Option<Vec<f64>>,
    pub beta_hi: Option<Vec<f64>>,
    pub delta_sep: Option<f64>,
    pub p_floor: Option<f64>,
    pub order: Option<OrderSpec>,
    pub beta_free: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: FamilySpec,
    /// Rows of the transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Emission parameters, one vector per state.
    pub betas: Vec<Vec<f64>>,
    #[serde(default)]
    pub domain: DomainSpec,
}

impl ModelSpec {
    pub fn build(&self) -> CliResult<HmmModel> {
        let m = self.transition.len();
        if m == 0 || self.transition.iter().any(|r| r.len() != m) {
            return Err(CliError::Usage("transition must be a non-empty square matrix".into()));
        }
        let family = SignalFamily::from(&self.family);
        let mut domain = ParameterDomain::for_family(&family);
        let d = &self.domain;
        if let Some(v) = &d.beta_lo {
            domain.beta_lo = v.clone();
        }
        if let Some(v) = &d.beta_hi {
            domain.beta_hi = v.clone();
        }
        if let Some(v) = d.delta_sep {
            domain.delta_sep = v;
        }
        if let Some(v) = d.p_floor {
            domain.p_floor = v;
        }
        if let Some(v) = d.order {
            domain.order = v.into();
        }
        if let Some(v) = &d.beta_free {
            domain.beta_free = v.clone();
        }
        let flat: Vec<f64> = self.transition.iter().flatten().copied().collect();
        let model = HmmModel::new(DMatrix::from_row_slice(m, m, &flat), self.betas.clone(), family, domain)
            .map_err(CliError::config)?;
        let violations = model.validate();
        if let Some(v) = violations.first() {
            return Err(CliError::Usage(format!("invalid model: {v:?}")));
        }
        Ok(model)
    }

    /// Spec of a core model (domain written out in full).
    pub fn from_model(model: &HmmModel) -> Self {
        let family = match *model.family() {
            SignalFamily::Poisson => FamilySpec::Poisson,
            SignalFamily::GaussianKnownVar { variance } => FamilySpec::GaussianKnownVar { variance },
            SignalFamily::GaussianFull => FamilySpec::GaussianFull,
            SignalFamily::Categorical { symbols } => FamilySpec::Categorical { symbols },
        };
        let p = model.transition();
        let dom = model.domain();
        ModelSpec {
            family,
            transition: (0..model.m()).map(|i| p.row(i).iter().copied().collect()).collect(),
            betas: model.betas().to_vec(),
            domain: DomainSpec {
                beta_lo: Some(dom.beta_lo.clone()),
                beta_hi: Some(dom.beta_hi.clone()),
                delta_sep: Some(dom.delta_sep),
                p_floor: Some(dom.p_floor),
                order: Some(match dom.order {
                    StateOrder::Ascending => OrderSpec::Ascending,
                    StateOrder::Descending => OrderSpec::Descending,
                    StateOrder::Unordered => OrderSpec::Unordered,
                }),
                beta_free: Some(dom.beta_free.clone()),
            },
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = crate::json::to_vec(self).expect("model spec serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A model given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(ModelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// Transitions; the sequence has `n + 1` signals.
    pub n: usize,
    pub seed: u64,
    /// Law of the first hidden state; stationary when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Counts for discrete families, raw pairs otherwise.
    #[default]
    Auto,
    Counts,
    Stream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Starting parameter vector; the configured model when absent.
    pub initial_theta: Option<Vec<f64>>,
    pub step_size: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub stall_window: usize,
    pub series_terms: usize,
    pub record_every: usize,
    pub line_search: bool,
    pub mode: DataMode,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        let c = EstimatorConfig::default();
        EstimatorSpec {
            initial_theta: None,
            step_size: c.step_size,
            max_iters: c.max_iters,
            stop_tol: c.stop_tol,
            stall_window: c.stall_window,
            series_terms: c.series_terms,
            record_every: c.record_every,
            line_search: c.line_search,
            mode: DataMode::Auto,
        }
    }
}

impl EstimatorSpec {
    pub fn core(&self) -> EstimatorConfig {
        EstimatorConfig {
            step_size: self.step_size,
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            stall_window: self.stall_window,
            series_terms: self.series_terms,
            record_every: self.record_every,
            line_search: self.line_search,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsSpec {
    pub hermite_order: usize,
    pub max_lag: usize,
    pub series_terms: usize,
    pub n0_max: usize,
}

impl Default for AsymptoticsSpec {
    fn default() -> Self {
        let c = AsymptoticsConfig::default();
        AsymptoticsSpec {
            hermite_order: c.hermite_order,
            max_lag: c.max_lag,
            series_terms: c.series_terms,
            n0_max: c.n0_max,
        }
    }
}

impl AsymptoticsSpec {
    pub fn core(&self) -> AsymptoticsConfig {
        AsymptoticsConfig {
            hermite_order: self.hermite_order,
            max_lag: self.max_lag,
            series_terms: self.series_terms,
            n0_max: self.n0_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum QuantileSpec {
    #[default]
    Sampled,
    Bound,
}

impl From<QuantileSpec> for QuantileMethod {
    fn from(q: QuantileSpec) -> Self {
        match q {
            QuantileSpec::Sampled => QuantileMethod::Sampled,
            QuantileSpec::Bound => QuantileMethod::Bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSpec {
    pub alpha: f64,
    pub method: QuantileSpec,
    pub samples: usize,
    pub seed: u64,
    pub max_lag: usize,
    pub fold_at: Option<u32>,
    pub bins: Vec<f64>,
    /// Alternative parameter vector for the type-II bound.
    pub alternative_theta: Option<Vec<f64>>,
    /// Replications used to estimate `E ||L_n - Q_theta1||_tv`.
    pub deviation_reps: usize,
}

impl Default for TestSpec {
    fn default() -> Self {
        let c = TestConfig::default();
        TestSpec {
            alpha: c.alpha,
            method: QuantileSpec::Sampled,
            samples: c.samples,
            seed: c.seed,
            max_lag: c.max_lag,
            fold_at: c.fold_at,
            bins: c.bins,
            alternative_theta: None,
            deviation_reps: 50,
        }
    }
}

impl TestSpec {
    pub fn core(&self) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            method: self.method.into(),
            samples: self.samples,
            seed: self.seed,
            max_lag: self.max_lag,
            fold_at: self.fold_at,
            bins: self.bins.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaperSpec {
    /// Iterations at which table rows are reported.
    pub checkpoints: Vec<usize>,
}

impl Default for PaperSpec {
    fn default() -> Self {
        PaperSpec { checkpoints: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelRef,
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub estimator: Option<EstimatorSpec>,
    #[serde(default)]
    pub asymptotics: Option<AsymptoticsSpec>,
    #[serde(default)]
    pub test: Option<TestSpec>,
    #[serde(default)]
    pub paper: Option<PaperSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// A config with its model file resolved.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub model_spec: ModelSpec,
    pub model: HmmModel,
}

impl LoadedConfig {
    pub fn simulation(&self) -> CliResult<&SimulationSpec> {
        self.config.simulation.as_ref().ok_or_else(|| missing("simulation"))
    }

    pub fn estimator(&self) -> EstimatorSpec {
        self.config.estimator.clone().unwrap_or_default()
    }

    pub fn asymptotics(&self) -> AsymptoticsSpec {
        self.config.asymptotics.clone().unwrap_or_default()
    }

    pub fn test(&self) -> TestSpec {
        self.config.test.clone().unwrap_or_default()
    }

    /// The config with the model inlined, as recorded in metadata.
    pub fn resolved(&self) -> ExperimentConfig {
        ExperimentConfig { model: ModelRef::Inline(self.model_spec.clone()), ..self.config.clone() }
    }
}

fn missing(key: &str) -> CliError {
    CliError::Usage(format!("config is missing the `{key}` section"))
}

pub fn parse_config(text: &str, base: &Path) -> CliResult<LoadedConfig> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let model_spec = match &config.model {
        ModelRef::Inline(spec) => spec.clone(),
        ModelRef::Path(p) => {
            let path = base.join(p);
            let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
    };
    let model = model_spec.build()?;
    if let Some(sim) = &config.simulation {
        if sim.n == 0 {
            return Err(CliError::Usage("simulation.n must be at least 1".into()));
        }
    }
    Ok(LoadedConfig { config, model_spec, model })
}

pub fn load_config(path: &Path) -> CliResult<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
