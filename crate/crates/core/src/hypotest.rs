//! Goodness-of-fit testing of a parameter through the relative entropy of
//! the pair empirical law, for signals on a finite alphabet.
//!
//! Under the null, `2 n H(L_n | Q)` converges in law to `|zeta|^2` where
//! `zeta` is a centred Gaussian vector indexed by pairs of symbols, with
//! covariance `Gamma_xi(c, d) / sqrt(Q(c) Q(d))` and `Gamma_xi` the long-run
//! covariance of the pair indicators.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::empirical::PairEmpirical;
use crate::error::{MeeError, Result};
use crate::linalg::{eigenvalues, psd_sqrt, quantile, symmetrize};
use crate::markov::{stationary, DoeblinCertificate};
use crate::model::{HmmModel, SignalFamily};
use crate::pairdist::STATIONARY_MAX_ITER;
use crate::simulate::{replication_seed, rng_for, simulate, standard_normal, SimulationConfig};

/// Cells of the pair law lighter than this are left out of the limit law.
pub const CELL_FLOOR: f64 = 1e-15;
/// Limit-law specs dropping more mass than this carry a warning.
pub const DROPPED_MASS_WARN: f64 = 1e-6;
/// Eigenvalues of `Gamma_zeta` below `-PSD_CLIP` are rejected; those in
/// `[-PSD_CLIP, 0)` are clipped to zero.
pub const PSD_CLIP: f64 = 1e-10;

fn check_same_len(nu: &[f64], mu: &[f64]) -> Result<()> {
    if nu.len() != mu.len() {
        return Err(MeeError::Shape { expected: mu.len(), found: nu.len() });
    }
    Ok(())
}

/// `H(nu | mu) = sum nu log(nu / mu)`; infinite when `nu` charges a point
/// `mu` does not.
pub fn kl_divergence(nu: &[f64], mu: &[f64]) -> Result<f64> {
    check_same_len(nu, mu)?;
    let mut h = 0.0;
    for (&a, &b) in nu.iter().zip(mu) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            h += a * libm::log(a / b);
        }
    }
    Ok(h.max(0.0))
}

/// `sum (nu - mu)^2 / mu`.
pub fn chi2_divergence(nu: &[f64], mu: &[f64]) -> Result<f64> {
    check_same_len(nu, mu)?;
    let mut s = 0.0;
    for (&a, &b) in nu.iter().zip(mu) {
        if b > 0.0 {
            s += (a - b) * (a - b) / b;
        } else if a > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(s)
}

/// Half the L1 distance.
pub fn tv_distance(nu: &[f64], mu: &[f64]) -> Result<f64> {
    check_same_len(nu, mu)?;
    Ok(0.5 * nu.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Per-state emission probabilities on `0..symbols`. For Poisson signals
/// the last symbol stands for every value `>= symbols - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteEmission {
    pub symbols: usize,
    /// `probs[state][symbol]`.
    pub probs: Vec<Vec<f64>>,
    /// Interior bin edges for binned Gaussian signals; empty for integer
    /// alphabets.
    pub edges: Vec<f64>,
}

impl FiniteEmission {
    /// Alphabet of the model: categorical symbols, or Poisson values up to
    /// `fold_at` (default: the model's truncation point) with the upper tail
    /// folded into the last symbol.
    pub fn new(model: &HmmModel, fold_at: Option<u32>) -> Result<Self> {
        match *model.family() {
            SignalFamily::Categorical { symbols } => {
                let probs = (0..model.m())
                    .map(|s| (0..symbols).map(|y| model.family().density(model.beta(s), y as f64)).collect())
                    .collect::<Result<_>>()?;
                Ok(FiniteEmission { symbols, probs, edges: Vec::new() })
            }
            SignalFamily::Poisson => {
                let top = fold_at.or_else(|| model.support_max()).unwrap();
                if top == 0 {
                    return Err(MeeError::invalid("the folded alphabet needs at least two symbols"));
                }
                let symbols = top as usize + 1;
                let probs = (0..model.m())
                    .map(|s| {
                        let rate = model.beta(s)[0];
                        let mut row: Vec<f64> =
                            (0..top).map(|y| model.family().density(&[rate], y as f64)).collect::<Result<_>>()?;
                        row.push(poisson_upper_tail(rate, top));
                        Ok(row)
                    })
                    .collect::<Result<_>>()?;
                Ok(FiniteEmission { symbols, probs, edges: Vec::new() })
            }
            _ => Err(MeeError::invalid("entropy testing needs a finite signal alphabet")),
        }
    }

    /// Gaussian signals binned as `(-inf, e_0], (e_0, e_1], ..., (e_last, inf)`.
    pub fn binned(model: &HmmModel, edges: &[f64]) -> Result<Self> {
        if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(MeeError::invalid("bin edges must be finite and strictly increasing"));
        }
        let probs = (0..model.m())
            .map(|s| {
                let (mean, sd) = match *model.family() {
                    SignalFamily::GaussianKnownVar { variance } => (model.beta(s)[0], libm::sqrt(variance)),
                    SignalFamily::GaussianFull => (model.beta(s)[0], libm::sqrt(0.5 / model.beta(s)[1])),
                    _ => return Err(MeeError::invalid("binning applies to Gaussian signals")),
                };
                let mut row = Vec::with_capacity(edges.len() + 1);
                let mut lo = f64::NEG_INFINITY;
                for &hi in edges.iter().chain(core::iter::once(&f64::INFINITY)) {
                    row.push(normal_mass(mean, sd, lo, hi));
                    lo = hi;
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(FiniteEmission { symbols: edges.len() + 1, probs, edges: edges.to_vec() })
    }

    /// Symbol of an observed signal (tail values fold into the last one).
    pub fn symbol(&self, y: f64) -> usize {
        if self.edges.is_empty() {
            (y as usize).min(self.symbols - 1)
        } else {
            self.edges.partition_point(|&e| e < y)
        }
    }
}

/// `P(a < X <= b)` for `X ~ N(mean, sd^2)`, using the tail on the far side
/// of the mean to keep small masses accurate.
fn normal_mass(mean: f64, sd: f64, a: f64, b: f64) -> f64 {
    let upper = |x: f64| 0.5 * libm::erfc((x - mean) / (sd * core::f64::consts::SQRT_2));
    let lower = |x: f64| 0.5 * libm::erfc((mean - x) / (sd * core::f64::consts::SQRT_2));
    if a >= mean {
        upper(a) - upper(b)
    } else if b <= mean {
        lower(b) - lower(a)
    } else {
        1.0 - lower(a) - upper(b)
    }
}

/// `P(Y >= k)` for `Y ~ Poisson(rate)`, summed upward so that tiny tails
/// keep their relative precision.
fn poisson_upper_tail(rate: f64, k: u32) -> f64 {
    let mut term = libm::exp(-rate + k as f64 * libm::log(rate) - libm::lgamma(k as f64 + 1.0));
    let mut sum = 0.0;
    let mut y = k as f64;
    while term > 0.0 {
        sum += term;
        y += 1.0;
        term *= rate / y;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Stationary pair law on the alphabet, row-major (`Q[y * S + y']`).
pub fn pair_law(model: &HmmModel, emission: &FiniteEmission) -> Result<Vec<f64>> {
    let mu = stationary(model.transition(), 1e-14, STATIONARY_MAX_ITER)?.mu;
    let s = emission.symbols;
    let p = model.transition();
    let e = &emission.probs;
    let mut q = vec![0.0; s * s];
    for i in 0..model.m() {
        for j in 0..model.m() {
            let a = mu[i] * p[(i, j)];
            for y in 0..s {
                for z in 0..s {
                    q[y * s + z] += a * e[i][y] * e[j][z];
                }
            }
        }
    }
    Ok(q)
}

/// Dense pair empirical law on the alphabet, row-major.
pub fn empirical_law(data: &PairEmpirical, emission: &FiniteEmission) -> Result<Vec<f64>> {
    let s = emission.symbols;
    let mut out = vec![0.0; s * s];
    for ((y, z), w) in data.weighted_pairs() {
        if emission.edges.is_empty() && (y < 0.0 || y.fract() != 0.0 || z < 0.0 || z.fract() != 0.0) {
            return Err(MeeError::invalid("signals must be non-negative integers"));
        }
        out[emission.symbol(y) * s + emission.symbol(z)] += w;
    }
    Ok(out)
}

/// The Gaussian limit of the scaled pair empirical fluctuations.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLawSpec {
    pub symbols: usize,
    /// Retained cells `(y, y')`, in row-major order.
    pub cells: Vec<(usize, usize)>,
    /// `Q` on the retained cells.
    pub q: Vec<f64>,
    pub gamma_xi: DMatrix<f64>,
    pub gamma_zeta: DMatrix<f64>,
    pub lambda_max: f64,
    /// `trace(Gamma_zeta) = E|zeta|^2`.
    pub trace: f64,
    /// Mass of the cells left out.
    pub dropped_mass: f64,
    /// Lag terms summed.
    pub lags_used: usize,
    pub warnings: Vec<String>,
}

/// Covariance of the pair-indicator fluctuations. Lag 0 is the multinomial
/// term, lag 1 couples through the shared middle signal, and the lags
/// `k >= 2` are summed in closed form per hidden-state pair through
/// `sum_k (P^{k-1} - 1 mu)` (truncated at `max_lag`, stopping early once
/// the increments vanish).
pub fn zeta_covariance(model: &HmmModel, emission: &FiniteEmission, max_lag: usize) -> Result<LimitLawSpec> {
    if max_lag == 0 {
        return Err(MeeError::invalid("lag truncation must be at least 1"));
    }
    let m = model.m();
    let s = emission.symbols;
    let p = model.transition();
    let e = &emission.probs;
    let mu = stationary(p, 1e-14, STATIONARY_MAX_ITER)?.mu;
    let q_all = pair_law(model, emission)?;
    let cells: Vec<(usize, usize)> =
        (0..s).flat_map(|y| (0..s).map(move |z| (y, z))).filter(|&(y, z)| q_all[y * s + z] >= CELL_FLOOR).collect();
    let dropped_mass: f64 = 1.0 - cells.iter().map(|&(y, z)| q_all[y * s + z]).sum::<f64>();
    let q: Vec<f64> = cells.iter().map(|&(y, z)| q_all[y * s + z]).collect();
    let n = cells.len();

    // alpha_b(y, y') = sum_a mu_a p_ab e_a(y) e_b(y'): X_1 = b and the pair.
    // beta_c(y, y') = sum_d p_cd e_c(y) e_d(y'): pair given its first state c.
    let mut alpha = DMatrix::zeros(n, m);
    let mut beta = DMatrix::zeros(n, m);
    for (k, &(y, z)) in cells.iter().enumerate() {
        for b in 0..m {
            alpha[(k, b)] = (0..m).map(|a| mu[a] * p[(a, b)] * e[a][y]).sum::<f64>() * e[b][z];
            beta[(k, b)] = e[b][y] * (0..m).map(|d| p[(b, d)] * e[d][z]).sum::<f64>();
        }
    }

    let mut gamma = DMatrix::zeros(n, n);
    for c in 0..n {
        gamma[(c, c)] += q[c];
        for d in 0..n {
            gamma[(c, d)] -= q[c] * q[d];
        }
    }
    // Lag 1: P((Y0, Y1) = (y, t), (Y1, Y2) = (t, v)) = sum_b alpha_b(y, t) beta'_b(v).
    // with beta'_b(v) = sum_c p_bc e_c(v).
    let fwd: Vec<Vec<f64>> =
        (0..m).map(|b| (0..s).map(|v| (0..m).map(|c| p[(b, c)] * e[c][v]).sum()).collect()).collect();
    let mut lag1 = DMatrix::zeros(n, n);
    for (ci, &(_, t)) in cells.iter().enumerate() {
        for (di, &(u, v)) in cells.iter().enumerate() {
            let mut joint = 0.0;
            if t == u {
                for b in 0..m {
                    joint += alpha[(ci, b)] * fwd[b][v];
                }
            }
            lag1[(ci, di)] = joint - q[ci] * q[di];
        }
    }
    gamma += &lag1 + lag1.transpose();

    // Lags k >= 2: alpha (sum_{j=1}^{K-1} (P^j - 1 mu)) beta^T.
    let pi = DMatrix::from_fn(m, m, |_, c| mu[c]);
    let mut pj = p.clone();
    let mut acc = DMatrix::zeros(m, m);
    let mut lags_used = 1;
    for _ in 2..=max_lag {
        acc += &pj - &pi;
        lags_used += 1;
        let next = &pj * p;
        let moved = (&next - &pj).amax();
        pj = next;
        if moved < 1e-16 {
            break;
        }
    }
    let far = &alpha * &acc * beta.transpose();
    gamma += &far + far.transpose();
    let gamma_xi = symmetrize(&gamma);

    let root_q: Vec<f64> = q.iter().map(|v| libm::sqrt(*v)).collect();
    let gamma_zeta = DMatrix::from_fn(n, n, |c, d| gamma_xi[(c, d)] / (root_q[c] * root_q[d]));
    let ev = eigenvalues(&gamma_zeta);
    let min = ev.first().copied().unwrap_or(0.0);
    if min < -PSD_CLIP {
        return Err(MeeError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let mut warnings = Vec::new();
    if dropped_mass > DROPPED_MASS_WARN {
        warnings.push(alloc::format!("cells below {CELL_FLOOR:e} carry mass {dropped_mass:e}"));
    }
    Ok(LimitLawSpec {
        symbols: s,
        cells,
        q,
        lambda_max: ev.last().copied().unwrap_or(0.0),
        trace: gamma_zeta.trace(),
        gamma_xi,
        gamma_zeta,
        dropped_mass,
        lags_used,
        warnings,
    })
}

/// Draws of `|zeta|^2` with `zeta = Gamma_zeta^{1/2} eta`.
pub fn limit_law_sample(spec: &LimitLawSpec, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let root = psd_sqrt(&spec.gamma_zeta, PSD_CLIP)?;
    let n = root.nrows();
    let mut rng = rng_for(seed, 0);
    let mut eta = nalgebra::DVector::zeros(n);
    Ok((0..samples)
        .map(|_| {
            for v in eta.iter_mut() {
                *v = standard_normal(&mut rng);
            }
            (&root * &eta).norm_squared()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaBounds {
    /// Bound on `E|zeta|^2`: `F (|S|^2 - 1)`.
    pub mean_bound: f64,
    /// Bound on the largest eigenvalue of `Gamma_zeta`: `F`.
    pub lambda_bound: f64,
}

/// Bounds on the limit law from a Doeblin certificate, with `F` the
/// certificate's variance factor and `symbols = |S|`.
pub fn zeta_bounds(symbols: usize, cert: &DoeblinCertificate) -> ZetaBounds {
    let f = cert.variance_factor();
    let cells = (symbols * symbols) as f64;
    ZetaBounds { mean_bound: f * (cells - 1.0), lambda_bound: f }
}

/// `P(|zeta|^2 > c E|zeta|^2) <= exp(-(sqrt(c) - 1)^2 E|zeta|^2 / (2 lambda_max))`,
/// for `c >= 1`.
pub fn tail_bound(c: f64, mean: f64, lambda_max: f64) -> f64 {
    let r = libm::sqrt(c.max(1.0)) - 1.0;
    libm::exp(-r * r * mean / (2.0 * lambda_max)).min(1.0)
}

/// Smallest `x` with `tail_bound(x / mean, mean, lambda_max) <= 1 - alpha`.
pub fn tail_bound_quantile(alpha: f64, mean: f64, lambda_max: f64) -> f64 {
    let r = libm::sqrt(2.0 * lambda_max * libm::log(1.0 / (1.0 - alpha)) / mean);
    (1.0 + r) * (1.0 + r) * mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileMethod {
    /// Quantile of sampled `|zeta|^2`.
    Sampled,
    /// Conservative quantile from the Gaussian concentration bound.
    Bound,
}

impl QuantileMethod {
    pub fn name(&self) -> &'static str {
        match self {
            QuantileMethod::Sampled => "sampled",
            QuantileMethod::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    pub method: QuantileMethod,
    pub samples: usize,
    pub seed: u64,
    pub max_lag: usize,
    /// Poisson alphabet fold point; `None` uses the model's truncation.
    pub fold_at: Option<u32>,
    /// Bin edges for Gaussian signals.
    pub bins: Vec<f64>,
}

impl TestConfig {
    /// The finite alphabet this configuration tests `model` on.
    pub fn emission(&self, model: &HmmModel) -> Result<FiniteEmission> {
        match model.family() {
            SignalFamily::GaussianKnownVar { .. } | SignalFamily::GaussianFull => {
                FiniteEmission::binned(model, &self.bins)
            }
            _ => FiniteEmission::new(model, self.fold_at),
        }
    }
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.95,
            method: QuantileMethod::Sampled,
            samples: 20_000,
            seed: 0,
            max_lag: 200,
            fold_at: None,
            bins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub n: usize,
    /// `H(L_n | Q_theta0)`.
    pub relative_entropy: f64,
    /// `n H(L_n | Q_theta0)`.
    pub statistic: f64,
    /// `c_alpha`; accept iff `H <= c_alpha / n`.
    pub critical_value: f64,
    pub accept: bool,
    pub alpha: f64,
    pub method: QuantileMethod,
    pub limit_mean: f64,
    pub limit_lambda_max: f64,
    pub cells: usize,
    pub warnings: Vec<String>,
}

/// Critical value `c_alpha` for the limit law: half the `alpha`-quantile of
/// `|zeta|^2`, sampled or from the concentration bound.
pub fn critical_value(
    spec: &LimitLawSpec,
    alpha: f64,
    method: QuantileMethod,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(MeeError::invalid("alpha must lie in (1/2, 1)"));
    }
    let q = match method {
        QuantileMethod::Sampled => {
            if samples == 0 {
                return Err(MeeError::invalid("need at least one limit-law sample"));
            }
            quantile(&limit_law_sample(spec, samples, seed)?, alpha)
        }
        QuantileMethod::Bound => tail_bound_quantile(alpha, spec.trace, spec.lambda_max),
    };
    Ok(0.5 * q)
}

/// Relative-entropy test of `theta = theta0` on integer-valued pair data.
pub fn entropy_test(data: &PairEmpirical, model0: &HmmModel, cfg: &TestConfig) -> Result<TestReport> {
    let emission = cfg.emission(model0)?;
    let spec = zeta_covariance(model0, &emission, cfg.max_lag)?;
    let c_alpha = critical_value(&spec, cfg.alpha, cfg.method, cfg.samples, cfg.seed)?;
    let l = empirical_law(data, &emission)?;
    let q = pair_law(model0, &emission)?;
    let h = kl_divergence(&l, &q)?;
    let n = data.n();
    Ok(TestReport {
        n,
        relative_entropy: h,
        statistic: n as f64 * h,
        critical_value: c_alpha,
        accept: h <= c_alpha / n as f64,
        alpha: cfg.alpha,
        method: cfg.method,
        limit_mean: spec.trace,
        limit_lambda_max: spec.lambda_max,
        cells: spec.cells.len(),
        warnings: spec.warnings,
    })
}

/// Monte-Carlo estimate of `E ||L_n - Q_theta||_tv` under `theta`, from
/// `reps` stationary-started trajectories.
pub fn tv_deviation_mc(model: &HmmModel, emission: &FiniteEmission, n: usize, reps: usize, seed: u64) -> Result<f64> {
    if reps == 0 {
        return Err(MeeError::invalid("need at least one replication"));
    }
    let q = pair_law(model, emission)?;
    let mu = stationary(model.transition(), 1e-14, STATIONARY_MAX_ITER)?.mu;
    let mut total = 0.0;
    for r in 0..reps as u64 {
        let traj = simulate(&SimulationConfig {
            model: model.clone(),
            initial: mu.clone(),
            n,
            seed: replication_seed(seed, r),
        })?;
        let l = empirical_law(&crate::empirical::pair_counts(&traj.signals)?, emission)?;
        total += tv_distance(&l, &q)?;
    }
    Ok(total / reps as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeTwoBound {
    /// `||Q_theta1 - Q_theta0||_tv`.
    pub separation: f64,
    /// The estimate of `E ||L_n - Q_theta1||_tv` used.
    pub deviation: f64,
    /// `separation - deviation - sqrt(c_alpha / 2n)`; the bound applies when positive.
    pub margin: f64,
    pub bound: f64,
}

/// Bound on the probability of accepting `theta0` when the data follow
/// `theta1`: `exp(-n (2 / (1 + n0 (1 - kappa) / kappa)^2) margin^2)`, or 1
/// when the margin is not positive. `cert` is a certificate of `theta1`'s
/// chain and `deviation` an estimate of `E ||L_n - Q_theta1||_tv`.
pub fn type2_bound(
    model0: &HmmModel,
    model1: &HmmModel,
    emission_fold: Option<u32>,
    n: usize,
    c_alpha: f64,
    cert: &DoeblinCertificate,
    deviation: f64,
) -> Result<TypeTwoBound> {
    let fold = emission_fold.or_else(|| match (model0.support_max(), model1.support_max()) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    });
    let e0 = FiniteEmission::new(model0, fold)?;
    let e1 = FiniteEmission::new(model1, fold)?;
    let separation = tv_distance(&pair_law(model1, &e1)?, &pair_law(model0, &e0)?)?;
    let margin = separation - deviation - libm::sqrt(c_alpha / (2.0 * n as f64));
    let bound = if margin > 0.0 {
        let denom = 1.0 + cert.n0 as f64 * (1.0 - cert.kappa) / cert.kappa;
        libm::exp(-(n as f64) * 2.0 / (denom * denom) * margin * margin).min(1.0)
    } else {
        1.0
    };
    Ok(TypeTwoBound { separation, deviation, margin, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairdist::tests::example1;

    #[test]
    fn divergence_examples() {
        let nu = [1.0, 0.0];
        let mu = [0.5, 0.5];
        assert!((kl_divergence(&nu, &mu).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(kl_divergence(&mu, &mu).unwrap(), 0.0);
        assert_eq!(kl_divergence(&mu, &nu).unwrap(), f64::INFINITY);
        assert!((chi2_divergence(&nu, &mu).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(chi2_divergence(&mu, &mu).unwrap(), 0.0);
        assert_eq!(tv_distance(&nu, &mu).unwrap(), 0.5);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(kl_divergence(&[1.0], &mu).is_err());
    }

    #[test]
    fn bounds_examples() {
        let cert = DoeblinCertificate { n0: 1, kappa: 1.0, nu0: vec![0.5, 0.5] };
        let b = zeta_bounds(3, &cert);
        assert!((b.mean_bound - 24.0).abs() < 1e-12);
        assert!((b.lambda_bound - 3.0).abs() < 1e-12);
        assert_eq!(tail_bound(1.0, 5.0, 2.0), 1.0);
        let x = tail_bound_quantile(0.95, 8.0, 1.5);
        assert!((tail_bound(x / 8.0, 8.0, 1.5) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn folded_poisson_alphabet_is_a_distribution() {
        let model = example1();
        let e = FiniteEmission::new(&model, Some(6)).unwrap();
        assert_eq!(e.symbols, 7);
        for row in &e.probs {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert_eq!(e.symbol(11.0), 6);
        let q = pair_law(&model, &e).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn binned_gaussian_masses() {
        let model = HmmModel::with_default_domain(
            DMatrix::from_row_slice(2, 2, &[0.2, 0.8, 0.7, 0.3]),
            vec![vec![0.0], vec![3.0]],
            SignalFamily::GaussianKnownVar { variance: 1.0 },
        )
        .unwrap();
        let e = FiniteEmission::binned(&model, &[0.0, 1.5, 3.0]).unwrap();
        assert_eq!(e.symbols, 4);
        assert!((e.probs[0][0] - 0.5).abs() < 1e-15);
        assert!((e.probs[1][3] - 0.5).abs() < 1e-15);
        // Phi(1.5) - 1/2
        assert!((e.probs[0][1] - 0.433_192_798_731_141_8).abs() < 1e-14);
        for row in &e.probs {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert_eq!(e.symbol(-2.0), 0);
        assert_eq!(e.symbol(0.0), 0);
        assert_eq!(e.symbol(0.1), 1);
        assert_eq!(e.symbol(9.0), 3);
        assert!(FiniteEmission::binned(&model, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn iid_chain_reduces_to_multinomial() {
        // Equal rows: pairs of distinct time steps far apart are independent,
        // and lag 1 only couples through the shared symbol.
        let model = example1()
            .with_parameters(nalgebra::DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.4, 0.6]), vec![vec![2.5], vec![0.5]])
            .unwrap();
        let e = FiniteEmission::new(&model, Some(5)).unwrap();
        let spec = zeta_covariance(&model, &e, 200).unwrap();
        assert!(spec.lags_used <= 3, "{}", spec.lags_used);
        for c in 0..spec.q.len() {
            let lag0 = spec.q[c] * (1.0 - spec.q[c]);
            let (y, z) = spec.cells[c];
            let lag1 = if y == z {
                // P(Y0 = Y1 = Y2 = y) - Q^2 with independent signals.
                let f: f64 = (0..2).map(|s| [0.4, 0.6][s] * e.probs[s][y]).sum();
                f * f * f - spec.q[c] * spec.q[c]
            } else {
                -spec.q[c] * spec.q[c]
            };
            assert!((spec.gamma_xi[(c, c)] - lag0 - 2.0 * lag1).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_limit_law() {
        let n = 3;
        let spec = LimitLawSpec {
            symbols: 0,
            cells: vec![(0, 0); n],
            q: vec![1.0 / 3.0; n],
            gamma_xi: DMatrix::identity(n, n),
            gamma_zeta: DMatrix::identity(n, n),
            lambda_max: 1.0,
            trace: 3.0,
            dropped_mass: 0.0,
            lags_used: 0,
            warnings: Vec::new(),
        };
        let draws = limit_law_sample(&spec, 100_000, 1).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 3.0).abs() < 3.0 * libm::sqrt(6.0 / 100_000.0));
        let c = critical_value(&spec, 0.95, QuantileMethod::Sampled, 100_000, 2).unwrap();
        assert!((c - 7.815 / 2.0).abs() < 0.05, "{c}");
    }

    #[test]
    fn exact_law_is_accepted() {
        let model = example1();
        let e = FiniteEmission::new(&model, Some(8)).unwrap();
        let q = pair_law(&model, &e).unwrap();
        let scale = 1e12;
        let mut counts = alloc::collections::BTreeMap::new();
        let mut n = 0u64;
        for y in 0..e.symbols {
            for z in 0..e.symbols {
                let c = libm::round(q[y * e.symbols + z] * scale) as u64;
                if c > 0 {
                    counts.insert((y as u32, z as u32), c);
                    n += c;
                }
            }
        }
        let data = PairEmpirical::Counts { counts, n: n as usize };
        let cfg = TestConfig { fold_at: Some(8), samples: 2000, ..Default::default() };
        let r = entropy_test(&data, &model, &cfg).unwrap();
        assert!(r.relative_entropy < 1e-9);
        assert!(r.accept);
    }

    #[test]
    fn type2_trivial_cases() {
        let model = example1();
        let cert = DoeblinCertificate { n0: 1, kappa: 0.6, nu0: vec![0.5, 0.5] };
        let t = type2_bound(&model, &model, None, 100_000, 10.0, &cert, 0.0).unwrap();
        assert_eq!(t.separation, 0.0);
        assert_eq!(t.bound, 1.0);
        let other = model.with_theta(&[0.7, 0.6, 2.0, 0.5]).unwrap();
        let mut last = 1.0;
        for n in [10_000usize, 20_000, 40_000, 80_000] {
            let b = type2_bound(&model, &other, None, n, 10.0, &cert, 0.01).unwrap().bound;
            assert!(b <= last);
            last = b;
        }
        assert!(last < 1.0);
    }
}
