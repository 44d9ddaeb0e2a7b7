//! The pair-entropy objective `H(theta) = -(1/n) sum log Q(y_{k-1}, y_k)`
//! and its minimization by projected gradient descent.
//!
//! Pair sums are split into fixed chunks of `CHUNK` items whose partial
//! sums are added in chunk order, so the result does not depend on how a
//! [`ChunkExecutor`] schedules the chunks.

use alloc::vec;
use alloc::vec::Vec;

use crate::empirical::PairEmpirical;
use crate::error::{MeeError, Result};
use crate::markov::DEFAULT_SERIES_TERMS;
use crate::model::{lex_cmp, HmmModel, SignalFamily, StateOrder, ThetaVector};
use crate::pairdist::PairDensityWorkspace;

pub const CHUNK: usize = 4096;

/// Runs independent chunk tasks and returns their results in chunk order.
pub trait ChunkExecutor: Sync {
    fn run(&self, chunks: usize, task: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Vec<Result<Vec<f64>>>;
}

/// Runs chunks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ChunkExecutor for Sequential {
    fn run(&self, chunks: usize, task: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Vec<Result<Vec<f64>>> {
        (0..chunks).map(task).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Step size `epsilon`.
    pub step_size: f64,
    pub max_iters: usize,
    /// `delta`: stop when the gradient norm, or the relative objective
    /// decrease over `stall_window` iterations, falls below it.
    pub stop_tol: f64,
    pub stall_window: usize,
    /// Terms kept in the stationary-derivative series.
    pub series_terms: usize,
    /// Trace cadence; the first and last iterates are always recorded.
    pub record_every: usize,
    /// Armijo backtracking instead of a fixed step.
    pub line_search: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            step_size: 1e-3,
            max_iters: 10_000,
            stop_tol: 1e-8,
            stall_window: 50,
            series_terms: DEFAULT_SERIES_TERMS,
            record_every: 1,
            line_search: false,
        }
    }
}

impl EstimatorConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(MeeError::invalid("step size must be positive"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(MeeError::invalid("stopping tolerance must be non-negative"));
        }
        if self.series_terms == 0 {
            return Err(MeeError::invalid("series truncation must be at least 1"));
        }
        if self.record_every == 0 || self.stall_window == 0 {
            return Err(MeeError::invalid("record cadence and stall window must be at least 1"));
        }
        Ok(())
    }
}

/// Pair data flattened for repeated objective evaluation: distinct pairs
/// with multiplicities in counts mode, every pair with weight one in stream
/// mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PairData {
    items: Vec<(f64, f64, f64)>,
    n: usize,
    /// `sum L log L`, available in counts mode.
    neg_entropy: Option<f64>,
}

impl PairData {
    pub fn new(data: &PairEmpirical) -> Self {
        let n = data.n();
        match data {
            PairEmpirical::Counts { counts, .. } => {
                let items: Vec<(f64, f64, f64)> =
                    counts.iter().map(|(&(a, b), &c)| (a as f64, b as f64, c as f64)).collect();
                let nf = n as f64;
                let neg_entropy = items.iter().map(|&(_, _, c)| c / nf * libm::log(c / nf)).sum();
                PairData { items, n, neg_entropy: Some(neg_entropy) }
            }
            PairEmpirical::Stream { pairs } => {
                PairData { items: pairs.iter().map(|&(a, b)| (a, b, 1.0)).collect(), n, neg_entropy: None }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Distinct evaluation points.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `sum L log L` (counts mode only).
    pub fn neg_entropy(&self) -> Option<f64> {
        self.neg_entropy
    }
}

fn reduce(parts: Vec<Result<Vec<f64>>>, width: usize) -> Result<Vec<f64>> {
    let mut total = vec![0.0; width];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part?) {
            *t += v;
        }
    }
    Ok(total)
}

fn chunk_count(data: &PairData) -> usize {
    data.items.len().div_ceil(CHUNK)
}

fn chunk_items(data: &PairData, c: usize) -> &[(f64, f64, f64)] {
    &data.items[c * CHUNK..((c + 1) * CHUNK).min(data.items.len())]
}

/// `H(theta)` at the workspace's parameter.
pub fn objective_at(ws: &PairDensityWorkspace, data: &PairData, exec: &dyn ChunkExecutor) -> Result<f64> {
    let task = |c: usize| -> Result<Vec<f64>> {
        let mut eval = ws.evaluator();
        let mut s = 0.0;
        for &(y, z, w) in chunk_items(data, c) {
            s -= w * eval.log_q(y, z)?;
        }
        Ok(vec![s])
    };
    let total = reduce(exec.run(chunk_count(data), &task), 1)?;
    Ok(total[0] / data.n as f64)
}

/// `H(theta)` and its gradient `-(1/n) sum grad log Q`.
pub fn objective_and_gradient(
    ws: &PairDensityWorkspace,
    data: &PairData,
    exec: &dyn ChunkExecutor,
) -> Result<(f64, Vec<f64>)> {
    let dim = ws.dim();
    let task = |c: usize| -> Result<Vec<f64>> {
        let mut eval = ws.evaluator();
        let mut acc = vec![0.0; dim + 1];
        let mut g = vec![0.0; dim];
        for &(y, z, w) in chunk_items(data, c) {
            let lq = eval.grad(y, z, &mut g)?;
            acc[0] -= w * lq;
            for (a, gi) in acc[1..].iter_mut().zip(&g) {
                *a -= w * gi;
            }
        }
        Ok(acc)
    };
    let total = reduce(exec.run(chunk_count(data), &task), dim + 1)?;
    let n = data.n as f64;
    Ok((total[0] / n, total[1..].iter().map(|v| v / n).collect()))
}

/// `H(theta) = -(1/n) sum log Q_theta(y_{k-1}, y_k)`.
pub fn objective(model: &HmmModel, data: &PairEmpirical, series_terms: usize) -> Result<f64> {
    let ws = PairDensityWorkspace::new(model, series_terms)?;
    objective_at(&ws, &PairData::new(data), &Sequential)
}

/// `H(L | Q_theta) = sum L log(L / Q_theta)` for integer-valued data.
pub fn relative_entropy_objective(model: &HmmModel, data: &PairEmpirical) -> Result<f64> {
    let counts = PairData::new(&data.to_counts()?);
    let ws = PairDensityWorkspace::new(model, 1)?;
    Ok(objective_at(&ws, &counts, &Sequential)? + counts.neg_entropy.unwrap())
}

/// Result of mapping a parameter vector back into the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub model: HmmModel,
    /// Whether the packed parameter differs from the input.
    pub changed: bool,
}

/// Maps `theta` (laid out as `template.theta()`) into the domain: off-diagonal
/// transitions clipped to `[p_floor, 1 - p_floor]` with rows rescaled when
/// their off-diagonal mass exceeds `1 - p_floor`; emission coordinates
/// clipped to their box (categorical probabilities also rescaled to leave
/// the implied last symbol its lower bound); states relabelled when the
/// emission parameters break the required order.
pub fn project_feasible(template: &HmmModel, theta: &[f64]) -> Result<Projection> {
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(MeeError::domain("parameter vector has non-finite entries"));
    }
    let raw = template.with_theta(theta)?;
    let dom = raw.domain().clone();
    let m = raw.m();
    let floor = dom.p_floor.clamp(0.0, 0.5);
    let mut p = raw.transition().clone();
    for i in 0..m {
        let mut off = 0.0;
        for j in (0..m).filter(|&j| j != i) {
            p[(i, j)] = p[(i, j)].clamp(floor, 1.0 - floor);
            off += p[(i, j)];
        }
        if off > 1.0 - floor {
            let scale = (1.0 - floor) / off;
            off = 0.0;
            for j in (0..m).filter(|&j| j != i) {
                p[(i, j)] *= scale;
                off += p[(i, j)];
            }
        }
        p[(i, i)] = 1.0 - off;
    }
    let mut betas = raw.betas().to_vec();
    for beta in betas.iter_mut() {
        for (c, v) in beta.iter_mut().enumerate() {
            *v = v.clamp(dom.beta_lo[c], dom.beta_hi[c]);
        }
        if let SignalFamily::Categorical { .. } = raw.family() {
            let cap = 1.0 - dom.beta_lo.first().copied().unwrap_or(0.0);
            let sum: f64 = beta.iter().sum();
            if sum > cap {
                for v in beta.iter_mut() {
                    *v *= cap / sum;
                }
            }
        }
    }
    let mut perm: Vec<usize> = (0..m).collect();
    match dom.order {
        StateOrder::Ascending => perm.sort_by(|&a, &b| lex_cmp(&betas[a], &betas[b])),
        StateOrder::Descending => perm.sort_by(|&a, &b| lex_cmp(&betas[b], &betas[a])),
        StateOrder::Unordered => {}
    }
    if perm.iter().enumerate().any(|(k, &s)| k != s) {
        let q = p.clone();
        for a in 0..m {
            for b in 0..m {
                p[(a, b)] = q[(perm[a], perm[b])];
            }
        }
        betas = perm.iter().map(|&s| betas[s].clone()).collect();
    }
    let model = raw.with_parameters(p, betas)?;
    let changed = model.theta().as_slice() != theta;
    Ok(Projection { model, changed })
}

/// Outcome of one descent step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub model: HmmModel,
    pub projected: bool,
    /// Objective and gradient at the starting point.
    pub objective: f64,
    pub gradient: Vec<f64>,
}

/// One step `theta + eps * (1/n) sum grad log Q`, followed by projection.
pub fn gd_step(model: &HmmModel, data: &PairEmpirical, cfg: &EstimatorConfig) -> Result<Step> {
    cfg.check()?;
    let ws = PairDensityWorkspace::new(model, cfg.series_terms)?;
    let (h, g) = objective_and_gradient(&ws, &PairData::new(data), &Sequential)?;
    let theta = model.theta();
    let next: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - cfg.step_size * gi).collect();
    let proj = project_feasible(model, &next)?;
    Ok(Step { model: proj.model, projected: proj.changed, objective: h, gradient: g })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientNorm,
    ObjectiveStalled,
    MaxIterations,
    NonFiniteObjective,
    LineSearchFailed,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::GradientNorm => "gradient_norm",
            StopReason::ObjectiveStalled => "objective_stalled",
            StopReason::MaxIterations => "max_iterations",
            StopReason::NonFiniteObjective => "non_finite_objective",
            StopReason::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub theta: ThetaVector,
    pub objective: f64,
    pub grad_norm: f64,
    /// Whether the step into this iterate was modified by the projection.
    pub projected: bool,
    /// `H(L | Q_theta)` in counts mode.
    pub relative_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTrace {
    pub records: Vec<TraceRecord>,
    pub model_hat: HmmModel,
    pub theta_hat: ThetaVector,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Steps that increased the objective by more than `1e-12`; a nonzero
    /// count under a fixed step means the step size is too large.
    pub nonmonotone_steps: usize,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

struct Point {
    model: HmmModel,
    objective: f64,
    gradient: Vec<f64>,
}

fn evaluate(
    model: HmmModel,
    data: &PairData,
    cfg: &EstimatorConfig,
    exec: &dyn ChunkExecutor,
) -> Result<Option<Point>> {
    let ws = PairDensityWorkspace::new(&model, cfg.series_terms)?;
    match objective_and_gradient(&ws, data, exec) {
        Ok((h, g)) if h.is_finite() && g.iter().all(|v| v.is_finite()) => {
            Ok(Some(Point { model, objective: h, gradient: g }))
        }
        Ok(_) | Err(MeeError::ZeroDensity { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The 2RE descent: repeats [`gd_step`] from `initial` until the gradient
/// norm or the windowed relative decrease of the objective drops below
/// `stop_tol`, or `max_iters` steps were taken.
pub fn run_2re(
    data: &PairEmpirical,
    initial: &HmmModel,
    cfg: &EstimatorConfig,
    exec: &dyn ChunkExecutor,
) -> Result<EstimationTrace> {
    cfg.check()?;
    let data = PairData::new(data);
    let start = project_feasible(initial, initial.theta().as_slice())?;
    let Some(mut cur) = evaluate(start.model, &data, cfg, exec)? else {
        return Err(MeeError::domain("objective is not finite at the initial parameter"));
    };
    let record = |k: usize, pt: &Point, projected: bool| TraceRecord {
        iteration: k,
        theta: pt.model.theta(),
        objective: pt.objective,
        grad_norm: norm(&pt.gradient),
        projected,
        relative_entropy: data.neg_entropy.map(|c| pt.objective + c),
    };
    let mut records = vec![record(0, &cur, start.changed)];
    let mut history: Vec<f64> = vec![cur.objective];
    let mut nonmonotone = 0;
    let mut k = 0;
    let mut last_projected = start.changed;
    let stop_reason = loop {
        if norm(&cur.gradient) < cfg.stop_tol {
            break StopReason::GradientNorm;
        }
        if k >= cfg.max_iters {
            break StopReason::MaxIterations;
        }
        let theta = cur.model.theta();
        let mut eps = cfg.step_size;
        let mut accepted: Option<(Point, bool)> = None;
        let mut non_finite = false;
        for _ in 0..if cfg.line_search { 60 } else { 1 } {
            let next: Vec<f64> = theta.iter().zip(&cur.gradient).map(|(t, g)| t - eps * g).collect();
            let proj = project_feasible(&cur.model, &next)?;
            let moved: Vec<f64> = proj.model.theta().into_vec();
            match evaluate(proj.model, &data, cfg, exec)? {
                Some(pt) => {
                    let decrease: f64 =
                        theta.iter().zip(&moved).zip(&cur.gradient).map(|((t, m), g)| (t - m) * g).sum();
                    if !cfg.line_search || pt.objective <= cur.objective - 1e-4 * decrease {
                        accepted = Some((pt, proj.changed));
                        break;
                    }
                }
                None if !cfg.line_search => non_finite = true,
                None => {}
            }
            eps *= 0.5;
        }
        let Some((next, projected)) = accepted else {
            break if non_finite { StopReason::NonFiniteObjective } else { StopReason::LineSearchFailed };
        };
        k += 1;
        if next.objective > cur.objective + 1e-12 {
            nonmonotone += 1;
        }
        cur = next;
        last_projected = projected;
        history.push(cur.objective);
        if k % cfg.record_every == 0 {
            records.push(record(k, &cur, projected));
        }
        if k >= cfg.stall_window {
            let old = history[k - cfg.stall_window];
            if (old - cur.objective) <= cfg.stop_tol * cur.objective.abs().max(1.0) && cfg.stop_tol > 0.0 {
                break StopReason::ObjectiveStalled;
            }
        }
    };
    if records.last().map(|r| r.iteration) != Some(k) {
        records.push(record(k, &cur, last_projected));
    }
    Ok(EstimationTrace {
        theta_hat: cur.model.theta(),
        grad_norm: norm(&cur.gradient),
        objective: cur.objective,
        model_hat: cur.model,
        records,
        iterations: k,
        stop_reason,
        nonmonotone_steps: nonmonotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::{pair_counts, pair_stream};
    use crate::model::ParameterDomain;
    use crate::pairdist::tests::example1;
    use crate::simulate::{simulate, SimulationConfig};
    use nalgebra::DMatrix;

    fn ex1_data(n: usize, seed: u64) -> Vec<f64> {
        let cfg = SimulationConfig { model: example1(), initial: vec![6.0 / 13.0, 7.0 / 13.0], n, seed };
        simulate(&cfg).unwrap().signals
    }

    #[test]
    fn single_pair_objective() {
        let data = pair_counts(&[0.0, 0.0]).unwrap();
        let h = objective(&example1(), &data, 30).unwrap();
        assert!((h - 2.18625).abs() < 1e-4, "{h}");
    }

    #[test]
    fn counts_and_stream_agree() {
        let y = ex1_data(20_000, 5);
        let a = objective(&example1(), &pair_counts(&y).unwrap(), 30).unwrap();
        let b = objective(&example1(), &pair_stream(&y).unwrap(), 30).unwrap();
        assert!((a - b).abs() < 1e-12);
        let ws = PairDensityWorkspace::new(&example1(), 30).unwrap();
        let (_, ga) = objective_and_gradient(&ws, &PairData::new(&pair_counts(&y).unwrap()), &Sequential).unwrap();
        let (_, gb) = objective_and_gradient(&ws, &PairData::new(&pair_stream(&y).unwrap()), &Sequential).unwrap();
        for (x, z) in ga.iter().zip(&gb) {
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_entropy_identity() {
        let y = ex1_data(3_000, 9);
        let data = pair_counts(&y).unwrap();
        let model = example1();
        let h = relative_entropy_objective(&model, &data).unwrap();
        let obj = objective(&model, &data, 30).unwrap();
        let nl: f64 = data.weighted_pairs().iter().map(|(_, l)| l * libm::log(*l)).sum();
        assert!((h - (obj + nl)).abs() < 1e-12);
        assert!(h > 0.0);
    }

    #[test]
    fn zero_step_is_rejected_and_projection_is_identity_on_domain() {
        let cfg = EstimatorConfig { step_size: 0.0, ..Default::default() };
        assert!(cfg.check().is_err());
        let model = example1();
        let proj = project_feasible(&model, model.theta().as_slice()).unwrap();
        assert!(!proj.changed);
        assert_eq!(proj.model.theta(), model.theta());
        assert_eq!(proj.model.betas(), model.betas());
    }

    #[test]
    fn projection_clips_transitions() {
        let mut model = example1();
        let mut dom = model.domain().clone();
        dom.p_floor = 0.01;
        model.set_domain(dom).unwrap();
        let proj = project_feasible(&model, &[1.05, 0.6, 2.5, 0.5]).unwrap();
        assert!(proj.changed);
        assert!((proj.model.transition()[(0, 1)] - 0.99).abs() < 1e-15);
        assert!((proj.model.transition()[(0, 0)] - 0.01).abs() < 1e-15);
        let proj = project_feasible(&model, &[0.3, 0.6, -1.0, 0.5]).unwrap();
        assert_eq!(proj.model.beta(1), &[1e-8]);
    }

    #[test]
    fn projection_relabels_states() {
        let model = HmmModel::with_default_domain(
            DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]),
            vec![vec![1.0], vec![3.0]],
            SignalFamily::Poisson,
        )
        .unwrap();
        let proj = project_feasible(&model, &[0.7, 0.6, 3.0, 1.0]).unwrap();
        assert!(proj.changed);
        assert_eq!(proj.model.betas(), &[vec![1.0], vec![3.0]]);
        assert_eq!(proj.model.transition()[(0, 1)], 0.6);
        assert_eq!(proj.model.transition()[(1, 0)], 0.7);
        let swapped = model.with_theta(&[0.7, 0.6, 3.0, 1.0]).unwrap();
        let a = PairDensityWorkspace::new(&swapped, 30).unwrap();
        let b = PairDensityWorkspace::new(&proj.model, 30).unwrap();
        for y in 0..8 {
            for z in 0..8 {
                let (qa, qb) = (a.q2_density(y as f64, z as f64).unwrap(), b.q2_density(y as f64, z as f64).unwrap());
                assert!((qa - qb).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn categorical_projection_keeps_last_symbol() {
        let family = SignalFamily::Categorical { symbols: 3 };
        let mut dom = ParameterDomain::for_family(&family);
        dom.order = StateOrder::Unordered;
        let model = HmmModel::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            vec![vec![0.2, 0.3], vec![0.5, 0.1]],
            family,
            dom,
        )
        .unwrap();
        let proj = project_feasible(&model, &[0.5, 0.5, 0.9, 0.5, 0.6, 0.1]).unwrap();
        let b = proj.model.beta(0);
        assert!(b[0] + b[1] <= 1.0 - 1e-9 + 1e-15);
    }

    #[test]
    fn one_step_decreases_objective() {
        let y = ex1_data(100_000, 2024);
        let data = pair_counts(&y).unwrap();
        let start = example1().with_theta(&[0.5, 0.5, 3.0, 0.1]).unwrap();
        let cfg = EstimatorConfig::default();
        let step = gd_step(&start, &data, &cfg).unwrap();
        let before = relative_entropy_objective(&start, &data).unwrap();
        let after = relative_entropy_objective(&step.model, &data).unwrap();
        assert!(after < before);
    }

    #[test]
    fn exact_distribution_is_stationary() {
        // Pair counts proportional to Q on a scale where rounding is negligible.
        let model = example1();
        let ws = PairDensityWorkspace::new(&model, 60).unwrap();
        let top = model.support_max().unwrap();
        let scale = 1e15;
        let mut counts = alloc::collections::BTreeMap::new();
        let mut n = 0u64;
        for y in 0..=top {
            for z in 0..=top {
                let c = libm::round(ws.q2_density(y as f64, z as f64).unwrap() * scale) as u64;
                if c > 0 {
                    counts.insert((y, z), c);
                    n += c;
                }
            }
        }
        let data = PairEmpirical::Counts { counts, n: n as usize };
        let (_, g) = objective_and_gradient(&ws, &PairData::new(&data), &Sequential).unwrap();
        assert!(norm(&g) < 1e-8, "{}", norm(&g));
        assert!(relative_entropy_objective(&model, &data).unwrap().abs() < 1e-12);
        let cfg = EstimatorConfig { series_terms: 60, ..Default::default() };
        let trace = run_2re(&data, &model, &cfg, &Sequential).unwrap();
        assert_eq!(trace.stop_reason, StopReason::GradientNorm);
        assert_eq!(trace.iterations, 0);
    }

    #[test]
    fn trace_cadence_and_monotone_descent() {
        let y = ex1_data(20_000, 77);
        let data = pair_counts(&y).unwrap();
        let start = example1().with_theta(&[0.5, 0.5, 3.0, 0.1]).unwrap();
        let cfg = EstimatorConfig { max_iters: 95, record_every: 10, stop_tol: 0.0, ..Default::default() };
        let trace = run_2re(&data, &start, &cfg, &Sequential).unwrap();
        assert_eq!(trace.stop_reason, StopReason::MaxIterations);
        assert_eq!(trace.iterations, 95);
        let its: Vec<usize> = trace.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95]);
        assert_eq!(trace.nonmonotone_steps, 0);
        for w in trace.records.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
            assert!(w[1].relative_entropy.unwrap() >= 0.0);
        }
    }

    #[test]
    fn line_search_reaches_lower_objective() {
        let y = ex1_data(20_000, 78);
        let data = pair_counts(&y).unwrap();
        let start = example1().with_theta(&[0.5, 0.5, 3.0, 0.1]).unwrap();
        let fixed = EstimatorConfig { max_iters: 50, stop_tol: 0.0, ..Default::default() };
        let ls = EstimatorConfig { step_size: 1.0, line_search: true, ..fixed.clone() };
        let a = run_2re(&data, &start, &fixed, &Sequential).unwrap();
        let b = run_2re(&data, &start, &ls, &Sequential).unwrap();
        assert!(b.objective < a.objective);
        assert_eq!(b.nonmonotone_steps, 0);
    }
}
