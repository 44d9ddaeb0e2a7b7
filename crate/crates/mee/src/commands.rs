//! The `simulate`, `estimate`, `asymptotics`, `test` and `paper` commands.

use std::fs;
use std::path::{Path, PathBuf};

use mee_core::asymptotics::{asymptotics_report, AsymptoticsReport};
use mee_core::empirical::{pair_counts, pair_stream, PairEmpirical};
use mee_core::estimator::{run_2re, EstimationTrace};
use mee_core::hypotest::{entropy_test, tv_deviation_mc, type2_bound, TestReport, TypeTwoBound};
use mee_core::markov::{doeblin_search, stationary, DoeblinCertificate};
use mee_core::pairdist::STATIONARY_MAX_ITER;
use mee_core::simulate::{simulate, SimulationConfig};
use mee_core::HmmModel;
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{load_config, parse_config, DataMode, ExperimentConfig, LoadedConfig, ModelSpec, QuantileSpec};
use crate::error::{CliError, CliResult};
use crate::exec::RayonExecutor;
use crate::{io, json};

pub const EXAMPLE1_CONFIG: &str = include_str!("../../../configs/example1.json");
pub const EXAMPLE2_CONFIG: &str = include_str!("../../../configs/example2.json");

/// Provenance written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub model_hash: String,
    pub threads: usize,
    pub data: Option<PathBuf>,
    pub data_sha256: Option<String>,
    pub config: ExperimentConfig,
}

fn metadata(command: &str, cfg: &LoadedConfig, seed: Option<u64>, data: Option<&Path>) -> CliResult<Metadata> {
    let data_sha256 = match data {
        Some(p) => Some(sha256_file(p)?),
        None => None,
    };
    Ok(Metadata {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        model_hash: cfg.model_spec.hash(),
        threads: rayon::current_num_threads(),
        data: data.map(Path::to_path_buf),
        data_sha256,
        config: cfg.resolved(),
    })
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn stationary_law(model: &HmmModel) -> CliResult<Vec<f64>> {
    Ok(stationary(model.transition(), 1e-14, STATIONARY_MAX_ITER)?.mu)
}

/// Simulated signals of the configured model.
pub fn simulate_signals(cfg: &LoadedConfig, seed: Option<u64>) -> CliResult<(Vec<f64>, u64)> {
    let sim = cfg.simulation()?;
    let seed = seed.unwrap_or(sim.seed);
    let initial = match &sim.initial {
        Some(v) => v.clone(),
        None => stationary_law(&cfg.model)?,
    };
    let traj = simulate(&SimulationConfig { model: cfg.model.clone(), initial, n: sim.n, seed }).map_err(|e| {
        if e.is_numerical() {
            e.into()
        } else {
            CliError::config(e)
        }
    })?;
    Ok((traj.signals, seed))
}

pub fn cmd_simulate(cfg: &LoadedConfig, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let (signals, seed) = simulate_signals(cfg, seed)?;
    prepare_out(out)?;
    let path = out.join("signals.csv");
    io::write_signals(&path, &signals)?;
    json::write_file(&out.join("metadata.json"), &metadata("simulate", cfg, Some(seed), Some(&path))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub mode: &'static str,
    pub theta_labels: Vec<String>,
    pub theta_initial: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub model_hat: ModelSpec,
    pub objective: f64,
    pub relative_entropy: Option<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop_reason: &'static str,
    pub nonmonotone_steps: usize,
}

pub fn pair_data(cfg: &LoadedConfig, mode: DataMode, signals: &[f64]) -> CliResult<PairEmpirical> {
    let counts = match mode {
        DataMode::Auto => cfg.model.family().is_discrete(),
        DataMode::Counts => true,
        DataMode::Stream => false,
    };
    for &y in signals {
        cfg.model.family().check_signal(y)?;
    }
    Ok(if counts { pair_counts(signals)? } else { pair_stream(signals)? })
}

pub fn estimate(cfg: &LoadedConfig, signals: &[f64]) -> CliResult<(EstimationTrace, EstimateReport)> {
    let spec = cfg.estimator();
    let data = pair_data(cfg, spec.mode, signals)?;
    let initial = match &spec.initial_theta {
        Some(t) => cfg.model.with_theta(t).map_err(CliError::config)?,
        None => cfg.model.clone(),
    };
    let trace = run_2re(&data, &initial, &spec.core(), &RayonExecutor).map_err(|e| match e {
        mee_core::MeeError::InvalidInput { .. } => CliError::config(e),
        e => e.into(),
    })?;
    let report = EstimateReport {
        n: data.n(),
        mode: if data.is_counts() { "counts" } else { "stream" },
        theta_labels: cfg.model.theta_labels(),
        theta_initial: initial.theta().into_vec(),
        theta_hat: trace.theta_hat.as_slice().to_vec(),
        model_hat: ModelSpec::from_model(&trace.model_hat),
        objective: trace.objective,
        relative_entropy: trace.records.last().and_then(|r| r.relative_entropy),
        grad_norm: trace.grad_norm,
        iterations: trace.iterations,
        stop_reason: trace.stop_reason.name(),
        nonmonotone_steps: trace.nonmonotone_steps,
    };
    Ok((trace, report))
}

pub fn cmd_estimate(cfg: &LoadedConfig, data: &Path, out: &Path) -> CliResult<()> {
    let signals = io::read_signals(data)?;
    let (trace, report) = estimate(cfg, &signals)?;
    prepare_out(out)?;
    json::write_file(&out.join("estimate.json"), &report)?;
    io::write_trace(&out.join("trace.csv"), &trace, &report.theta_labels)?;
    json::write_file(&out.join("metadata.json"), &metadata("estimate", cfg, None, Some(data))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateJson {
    pub n0: usize,
    pub kappa: f64,
    pub nu0: Vec<f64>,
    pub variance_factor: f64,
}

impl From<&DoeblinCertificate> for CertificateJson {
    fn from(c: &DoeblinCertificate) -> Self {
        CertificateJson { n0: c.n0, kappa: c.kappa, nu0: c.nu0.clone(), variance_factor: c.variance_factor() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsJson {
    pub theta_labels: Vec<String>,
    pub theta: Vec<f64>,
    pub i2: Vec<Vec<f64>>,
    pub i2_inv: Vec<Vec<f64>>,
    /// `max |I2 I2^{-1} - Id|`.
    pub inverse_residual: f64,
    pub i2_eigenvalues: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub gamma_lags: usize,
    pub gamma_truncated: bool,
    pub sandwich: Vec<Vec<f64>>,
    pub bound_matrix: Vec<Vec<f64>>,
    pub bound_gap_min_eigenvalue: f64,
    pub certificate: CertificateJson,
}

pub fn asymptotics_json(model: &HmmModel, r: &AsymptoticsReport) -> AsymptoticsJson {
    let d = r.i2.nrows();
    AsymptoticsJson {
        theta_labels: model.theta_labels(),
        theta: model.theta().into_vec(),
        i2: rows(&r.i2),
        i2_inv: rows(&r.i2_inv),
        inverse_residual: (&r.i2 * &r.i2_inv - DMatrix::<f64>::identity(d, d)).amax(),
        i2_eigenvalues: r.i2_eigenvalues.clone(),
        gamma: rows(&r.gamma),
        gamma_lags: r.gamma_lags,
        gamma_truncated: r.gamma_truncated,
        sandwich: rows(&r.sandwich),
        bound_matrix: rows(&r.bound_matrix),
        bound_gap_min_eigenvalue: r.bound_gap_min_eigenvalue,
        certificate: (&r.certificate).into(),
    }
}

pub fn cmd_asymptotics(cfg: &LoadedConfig, out: &Path) -> CliResult<()> {
    let report = asymptotics_report(&cfg.model, &cfg.asymptotics().core())?;
    prepare_out(out)?;
    json::write_file(&out.join("asymptotics.json"), &asymptotics_json(&cfg.model, &report))?;
    json::write_file(&out.join("metadata.json"), &metadata("asymptotics", cfg, None, None)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct TypeTwoJson {
    pub theta1: Vec<f64>,
    pub separation: f64,
    pub deviation: f64,
    pub deviation_reps: usize,
    pub margin: f64,
    pub bound: f64,
    pub certificate: CertificateJson,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestJson {
    pub n: usize,
    pub alpha: f64,
    pub method: &'static str,
    pub relative_entropy: f64,
    pub statistic: f64,
    pub critical_value: f64,
    /// `critical_value / n`.
    pub threshold: f64,
    pub accept: bool,
    pub limit_mean: f64,
    pub limit_lambda_max: f64,
    pub cells: usize,
    pub warnings: Vec<String>,
    pub type2: Option<TypeTwoJson>,
}

#[derive(Debug, Clone, Default)]
pub struct TestOverrides {
    pub alpha: Option<f64>,
    pub method: Option<QuantileSpec>,
    pub seed: Option<u64>,
}

pub fn run_test(
    cfg: &LoadedConfig,
    signals: &[f64],
    ov: &TestOverrides,
) -> CliResult<(TestReport, Option<TypeTwoBound>, TestJson)> {
    let mut spec = cfg.test();
    if let Some(a) = ov.alpha {
        spec.alpha = a;
    }
    if let Some(m) = ov.method {
        spec.method = m;
    }
    if let Some(s) = ov.seed {
        spec.seed = s;
    }
    if !(spec.alpha > 0.5 && spec.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (1/2, 1), got {}", spec.alpha)));
    }
    let tcfg = spec.core();
    tcfg.emission(&cfg.model).map_err(CliError::config)?;
    let data =
        pair_data(cfg, if cfg.model.family().is_discrete() { DataMode::Counts } else { DataMode::Stream }, signals)?;
    let report = entropy_test(&data, &cfg.model, &tcfg)?;
    let mut type2 = None;
    let mut type2_json = None;
    if let Some(theta1) = &spec.alternative_theta {
        let model1 = cfg.model.with_theta(theta1).map_err(CliError::config)?;
        if !spec.bins.is_empty() {
            return Err(CliError::Usage("the type-II bound needs an integer alphabet".into()));
        }
        let cert = doeblin_search(model1.transition(), cfg.asymptotics().n0_max)
            .ok_or_else(|| CliError::Numerical("no Doeblin certificate for the alternative".into()))?;
        let fold = spec.fold_at.or_else(|| match (cfg.model.support_max(), model1.support_max()) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        });
        let emission = mee_core::hypotest::FiniteEmission::new(&model1, fold)?;
        let deviation = tv_deviation_mc(&model1, &emission, data.n(), spec.deviation_reps, spec.seed)?;
        let t = type2_bound(&cfg.model, &model1, fold, data.n(), report.critical_value, &cert, deviation)?;
        type2_json = Some(TypeTwoJson {
            theta1: theta1.clone(),
            separation: t.separation,
            deviation: t.deviation,
            deviation_reps: spec.deviation_reps,
            margin: t.margin,
            bound: t.bound,
            certificate: (&cert).into(),
        });
        type2 = Some(t);
    }
    let json = TestJson {
        n: report.n,
        alpha: report.alpha,
        method: report.method.name(),
        relative_entropy: report.relative_entropy,
        statistic: report.statistic,
        critical_value: report.critical_value,
        threshold: report.critical_value / report.n as f64,
        accept: report.accept,
        limit_mean: report.limit_mean,
        limit_lambda_max: report.limit_lambda_max,
        cells: report.cells,
        warnings: report.warnings.clone(),
        type2: type2_json,
    };
    Ok((report, type2, json))
}

pub fn cmd_test(cfg: &LoadedConfig, data: &Path, ov: &TestOverrides, out: &Path) -> CliResult<()> {
    let signals = io::read_signals(data)?;
    let (_, _, json) = run_test(cfg, &signals, ov)?;
    prepare_out(out)?;
    json::write_file(&out.join("test.json"), &json)?;
    let seed = ov.seed.unwrap_or(cfg.test().seed);
    json::write_file(&out.join("metadata.json"), &metadata("test", cfg, Some(seed), Some(data))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub k: usize,
    pub transition: Vec<Vec<f64>>,
    pub betas: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    /// `H(L_n | Q_theta(k))`, for count data.
    pub relative_entropy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PaperReport {
    pub example: u8,
    pub n: usize,
    pub seed: u64,
    pub theta0: Vec<f64>,
    pub theta_labels: Vec<String>,
    pub rows: Vec<TableRow>,
    pub estimate: EstimateReport,
    /// `max |theta_hat - theta0|`.
    pub max_abs_error: f64,
    pub asymptotics: AsymptoticsJson,
}

/// Built-in configuration of a numbered example.
pub fn example_config(example: u8) -> CliResult<LoadedConfig> {
    let text = match example {
        1 => EXAMPLE1_CONFIG,
        2 => EXAMPLE2_CONFIG,
        _ => return Err(CliError::Usage(format!("unknown example {example}; expected 1 or 2"))),
    };
    parse_config(text, Path::new("."))
}

/// Simulate, estimate and tabulate the iterates at the configured
/// checkpoints.
pub fn paper_run(
    example: u8,
    cfg: &LoadedConfig,
    seed: Option<u64>,
) -> CliResult<(Vec<f64>, EstimationTrace, PaperReport)> {
    let (signals, seed) = simulate_signals(cfg, seed)?;
    let (trace, estimate) = estimate(cfg, &signals)?;
    let checkpoints = cfg.config.paper.clone().unwrap_or_default().checkpoints;
    let template = &cfg.model;
    let mut table = Vec::new();
    for &k in &checkpoints {
        let Some(r) = trace.records.iter().find(|r| r.iteration == k) else {
            return Err(CliError::Numerical(format!(
                "iteration {k} was not recorded (run stopped at {} by {})",
                trace.iterations,
                trace.stop_reason.name()
            )));
        };
        let m = template.with_theta(r.theta.as_slice())?;
        table.push(TableRow {
            k,
            transition: rows(m.transition()),
            betas: m.betas().to_vec(),
            theta: r.theta.as_slice().to_vec(),
            relative_entropy: r.relative_entropy,
        });
    }
    let asym = asymptotics_report(template, &cfg.asymptotics().core())?;
    let theta0 = template.theta().into_vec();
    let max_abs_error = trace.theta_hat.as_slice().iter().zip(&theta0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let report = PaperReport {
        example,
        n: signals.len() - 1,
        seed,
        theta_labels: template.theta_labels(),
        theta0,
        rows: table,
        estimate,
        max_abs_error,
        asymptotics: asymptotics_json(template, &asym),
    };
    Ok((signals, trace, report))
}

fn write_table(path: &Path, report: &PaperReport) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["k".to_string()];
    header.extend(report.theta_labels.iter().cloned());
    header.push("relative_entropy".into());
    w.write_record(&header).map_err(err)?;
    for r in &report.rows {
        let mut row = vec![r.k.to_string()];
        row.extend(r.theta.iter().map(|&v| json::fmt_f64(v)));
        row.push(r.relative_entropy.map(json::fmt_f64).unwrap_or_default());
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn cmd_paper(example: u8, config: Option<&Path>, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => example_config(example)?,
    };
    let (signals, trace, report) = paper_run(example, &cfg, seed)?;
    let dir = out.join(format!("example{example}"));
    prepare_out(&dir)?;
    let data = dir.join("signals.csv");
    io::write_signals(&data, &signals)?;
    io::write_trace(&dir.join("trace.csv"), &trace, &report.theta_labels)?;
    write_table(&dir.join("table.csv"), &report)?;
    json::write_file(&dir.join("report.json"), &report)?;
    json::write_file(&dir.join("metadata.json"), &metadata("paper", &cfg, Some(report.seed), Some(&data))?)
}
