//! Parameter domains, the flat parameter vector, and emission families.
//!
//! A model is a row-stochastic transition matrix `P` on `m` hidden states
//! together with one emission parameter vector per state. The flat
//! parameter vector lists the off-diagonal transition probabilities in
//! row-major order followed by the free emission coordinates, coordinate
//! by coordinate, state by state within a coordinate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{MeeError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Upper-tail mass below which Poisson supports are truncated.
pub const POISSON_TAIL: f64 = 1e-12;

/// Reference measure the emission densities are taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMeasure {
    Counting,
    Lebesgue,
}

/// Emission family `q_beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalFamily {
    /// Poisson counts, `beta` is the rate.
    Poisson,
    /// Gaussian with known shared variance, `beta` is the mean.
    GaussianKnownVar { variance: f64 },
    /// Gaussian with `beta = (mean, 1/(2 sigma^2))`.
    GaussianFull,
    /// Categorical over `symbols` labels `0..symbols`. `beta` holds the
    /// probabilities of the first `symbols - 1` labels; the last label takes
    /// the remaining mass.
    Categorical { symbols: usize },
}

impl SignalFamily {
    /// Per-state parameter dimension `d`.
    pub fn beta_dim(&self) -> usize {
        match self {
            SignalFamily::Poisson | SignalFamily::GaussianKnownVar { .. } => 1,
            SignalFamily::GaussianFull => 2,
            SignalFamily::Categorical { symbols } => symbols.saturating_sub(1),
        }
    }

    pub fn reference_measure(&self) -> ReferenceMeasure {
        match self {
            SignalFamily::Poisson | SignalFamily::Categorical { .. } => ReferenceMeasure::Counting,
            _ => ReferenceMeasure::Lebesgue,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.reference_measure() == ReferenceMeasure::Counting
    }

    pub fn name(&self) -> &'static str {
        match self {
            SignalFamily::Poisson => "poisson",
            SignalFamily::GaussianKnownVar { .. } => "gaussian_known_var",
            SignalFamily::GaussianFull => "gaussian_full",
            SignalFamily::Categorical { .. } => "categorical",
        }
    }

    /// Natural parameter box used when no explicit domain is given.
    pub fn default_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            SignalFamily::Poisson => (vec![1e-8], vec![f64::INFINITY]),
            SignalFamily::GaussianKnownVar { .. } => (vec![-1e8], vec![1e8]),
            SignalFamily::GaussianFull => (vec![-1e8, 1e-8], vec![1e8, 1e8]),
            SignalFamily::Categorical { symbols } => {
                let d = symbols.saturating_sub(1);
                (vec![1e-9; d], vec![1.0; d])
            }
        }
    }

    /// Checks that `beta` has the right length and lies in the family's domain.
    pub fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.beta_dim() {
            return Err(MeeError::Shape { expected: self.beta_dim(), found: beta.len() });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(MeeError::domain("non-finite emission parameter"));
        }
        match *self {
            SignalFamily::Poisson if beta[0] <= 0.0 => {
                Err(MeeError::domain(format!("Poisson rate must be positive, got {}", beta[0])))
            }
            SignalFamily::GaussianKnownVar { variance } if !(variance > 0.0) => {
                Err(MeeError::domain(format!("variance must be positive, got {variance}")))
            }
            SignalFamily::GaussianFull if beta[1] <= 0.0 => {
                Err(MeeError::domain(format!("precision coordinate 1/(2 sigma^2) must be positive, got {}", beta[1])))
            }
            SignalFamily::Categorical { symbols } => {
                if symbols < 2 {
                    return Err(MeeError::domain("categorical family needs at least 2 symbols"));
                }
                let sum: f64 = beta.iter().sum();
                if beta.iter().any(|&b| b < 0.0) || sum > 1.0 + 1e-12 {
                    Err(MeeError::domain("categorical probabilities must be >= 0 and sum to 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Checks that `y` belongs to the signal space.
    pub fn check_signal(&self, y: f64) -> Result<()> {
        let ok = match *self {
            SignalFamily::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
            SignalFamily::Categorical { symbols } => y >= 0.0 && y.fract() == 0.0 && y < symbols as f64,
            _ => y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MeeError::invalid(format!("signal {y} is outside the {} signal space", self.name())))
        }
    }

    /// `q_beta(y)` with respect to the reference measure.
    pub fn density(&self, beta: &[f64], y: f64) -> Result<f64> {
        Ok(libm::exp(self.log_density(beta, y)?))
    }

    /// `log q_beta(y)`; `-inf` where the density vanishes.
    pub fn log_density(&self, beta: &[f64], y: f64) -> Result<f64> {
        self.check_beta(beta)?;
        self.check_signal(y)?;
        Ok(self.ln_q(beta, y))
    }

    /// Gradient of `log q_beta(y)` in `beta`.
    pub fn grad_log(&self, beta: &[f64], y: f64) -> Result<Vec<f64>> {
        self.check_positive(beta, y)?;
        let mut out = vec![0.0; self.beta_dim()];
        self.grad_ln_q_into(beta, y, &mut out);
        Ok(out)
    }

    /// Hessian of `log q_beta(y)` in `beta`.
    pub fn hess_log(&self, beta: &[f64], y: f64) -> Result<DMatrix<f64>> {
        self.check_positive(beta, y)?;
        let d = self.beta_dim();
        let mut out = vec![0.0; d * d];
        self.hess_ln_q_into(beta, y, &mut out);
        Ok(DMatrix::from_row_slice(d, d, &out))
    }

    fn check_positive(&self, beta: &[f64], y: f64) -> Result<()> {
        if self.log_density(beta, y)? == f64::NEG_INFINITY {
            return Err(MeeError::ZeroDensity { y, y_next: f64::NAN });
        }
        Ok(())
    }

    pub(crate) fn ln_q(&self, beta: &[f64], y: f64) -> f64 {
        match *self {
            SignalFamily::Poisson => {
                let rate = beta[0];
                -rate + y * libm::log(rate) - libm::lgamma(y + 1.0)
            }
            SignalFamily::GaussianKnownVar { variance } => {
                let r = y - beta[0];
                -0.5 * r * r / variance - 0.5 * (LN_2PI + libm::log(variance))
            }
            SignalFamily::GaussianFull => {
                let (mean, tau) = (beta[0], beta[1]);
                let r = y - mean;
                0.5 * libm::log(tau / core::f64::consts::PI) - tau * r * r
            }
            SignalFamily::Categorical { .. } => libm::log(categorical_mass(beta, y as usize)),
        }
    }

    pub(crate) fn grad_ln_q_into(&self, beta: &[f64], y: f64, out: &mut [f64]) {
        match *self {
            SignalFamily::Poisson => out[0] = y / beta[0] - 1.0,
            SignalFamily::GaussianKnownVar { variance } => out[0] = (y - beta[0]) / variance,
            SignalFamily::GaussianFull => {
                let (mean, tau) = (beta[0], beta[1]);
                let r = y - mean;
                out[0] = 2.0 * tau * r;
                out[1] = 0.5 / tau - r * r;
            }
            SignalFamily::Categorical { .. } => {
                let k = y as usize;
                let last = beta.len();
                if k < last {
                    out.fill(0.0);
                    out[k] = 1.0 / beta[k];
                } else {
                    let rest = 1.0 / categorical_mass(beta, last);
                    out.fill(-rest);
                }
            }
        }
    }

    /// Row-major `d x d` Hessian of `log q_beta(y)`.
    pub(crate) fn hess_ln_q_into(&self, beta: &[f64], y: f64, out: &mut [f64]) {
        match *self {
            SignalFamily::Poisson => out[0] = -y / (beta[0] * beta[0]),
            SignalFamily::GaussianKnownVar { variance } => out[0] = -1.0 / variance,
            SignalFamily::GaussianFull => {
                let (mean, tau) = (beta[0], beta[1]);
                let r = y - mean;
                out[0] = -2.0 * tau;
                out[1] = 2.0 * r;
                out[2] = 2.0 * r;
                out[3] = -0.5 / (tau * tau);
            }
            SignalFamily::Categorical { .. } => {
                let d = beta.len();
                let k = y as usize;
                if k < d {
                    out.fill(0.0);
                    out[k * d + k] = -1.0 / (beta[k] * beta[k]);
                } else {
                    let rest = categorical_mass(beta, d);
                    out.fill(-1.0 / (rest * rest));
                }
            }
        }
    }
}

fn categorical_mass(beta: &[f64], k: usize) -> f64 {
    if k < beta.len() {
        beta[k]
    } else {
        (1.0 - beta.iter().sum::<f64>()).max(0.0)
    }
}

/// Smallest `y_max` with `P(Y > y_max) < tail` for `Y ~ Poisson(rate)`.
pub fn poisson_cutoff(rate: f64, tail: f64) -> u32 {
    let mut pmf = libm::exp(-rate);
    let mut cdf = pmf;
    let mut y = 0u32;
    // Underflowing start (huge rates) is handled in log space.
    if pmf == 0.0 {
        let mut log_cdf_gap;
        loop {
            y += 1;
            let lp = -rate + y as f64 * libm::log(rate) - libm::lgamma(y as f64 + 1.0);
            if y as f64 > rate {
                // Past the mode the tail is bounded by a geometric series.
                let ratio = rate / (y as f64 + 1.0);
                log_cdf_gap = lp + libm::log(ratio / (1.0 - ratio));
                if log_cdf_gap < libm::log(tail) {
                    return y;
                }
            }
        }
    }
    while 1.0 - cdf >= tail {
        y += 1;
        pmf *= rate / y as f64;
        cdf += pmf;
        if pmf == 0.0 && y as f64 > rate {
            break;
        }
    }
    y
}

/// Hidden-state ordering enforced on the emission parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateOrder {
    Ascending,
    Descending,
    Unordered,
}

/// The admissible parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    /// Per-coordinate lower bound on every state's emission parameter.
    pub beta_lo: Vec<f64>,
    /// Per-coordinate upper bound.
    pub beta_hi: Vec<f64>,
    /// Minimum Euclidean distance between two states' emission parameters.
    pub delta_sep: f64,
    /// Minimum transition probability kept by the projection.
    pub p_floor: f64,
    pub order: StateOrder,
    /// Which emission coordinates are estimated; fixed ones keep their
    /// value from the model template.
    pub beta_free: Vec<bool>,
}

impl ParameterDomain {
    /// Unconstrained domain for a family: natural bounds, no separation,
    /// ascending order, every coordinate free.
    pub fn for_family(family: &SignalFamily) -> Self {
        let (beta_lo, beta_hi) = family.default_bounds();
        let d = family.beta_dim();
        ParameterDomain {
            beta_lo,
            beta_hi,
            delta_sep: 0.0,
            p_floor: 0.0,
            order: StateOrder::Ascending,
            beta_free: vec![true; d],
        }
    }

    pub fn free_coords(&self) -> Vec<usize> {
        self.beta_free.iter().enumerate().filter_map(|(c, &free)| free.then_some(c)).collect()
    }
}

/// Flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Self {
        ThetaVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ThetaVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ThetaVector {
    fn from(v: Vec<f64>) -> Self {
        ThetaVector(v)
    }
}

/// What a [`Violation`] is about.
#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    RowSum { row: usize },
    EntryRange { row: usize, col: usize },
    TransitionFloor { row: usize, col: usize },
    FamilyDomain { state: usize },
    BetaBounds { state: usize, coord: usize },
    Separation { first: usize, second: usize },
    Ordering { state: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Tolerance on row sums of `P`.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Full parameter set of a hidden Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    transition: DMatrix<f64>,
    betas: Vec<Vec<f64>>,
    family: SignalFamily,
    domain: ParameterDomain,
}

impl HmmModel {
    /// Builds a model after checking shapes. Stochasticity and domain
    /// membership are reported by [`HmmModel::validate`].
    pub fn new(
        transition: DMatrix<f64>,
        betas: Vec<Vec<f64>>,
        family: SignalFamily,
        domain: ParameterDomain,
    ) -> Result<Self> {
        let m = transition.nrows();
        if m == 0 || transition.ncols() != m {
            return Err(MeeError::invalid("transition matrix must be square and non-empty"));
        }
        if betas.len() != m {
            return Err(MeeError::Shape { expected: m, found: betas.len() });
        }
        let d = family.beta_dim();
        if d == 0 {
            return Err(MeeError::invalid("emission family has no parameters"));
        }
        for b in &betas {
            if b.len() != d {
                return Err(MeeError::Shape { expected: d, found: b.len() });
            }
        }
        for len in [domain.beta_lo.len(), domain.beta_hi.len(), domain.beta_free.len()] {
            if len != d {
                return Err(MeeError::Shape { expected: d, found: len });
            }
        }
        Ok(HmmModel { transition, betas, family, domain })
    }

    /// Model with the family's default domain.
    pub fn with_default_domain(transition: DMatrix<f64>, betas: Vec<Vec<f64>>, family: SignalFamily) -> Result<Self> {
        let domain = ParameterDomain::for_family(&family);
        Self::new(transition, betas, family, domain)
    }

    pub fn m(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn betas(&self) -> &[Vec<f64>] {
        &self.betas
    }

    pub fn beta(&self, state: usize) -> &[f64] {
        &self.betas[state]
    }

    pub fn family(&self) -> &SignalFamily {
        &self.family
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn set_domain(&mut self, domain: ParameterDomain) -> Result<()> {
        let d = self.family.beta_dim();
        if domain.beta_lo.len() != d || domain.beta_hi.len() != d || domain.beta_free.len() != d {
            return Err(MeeError::Shape { expected: d, found: domain.beta_free.len() });
        }
        self.domain = domain;
        Ok(())
    }

    /// Number of transition parameters, `m(m-1)`.
    pub fn n_transition_params(&self) -> usize {
        let m = self.m();
        m * (m - 1)
    }

    /// Total dimension `M = m(m-1) + m * d_free`.
    pub fn theta_dim(&self) -> usize {
        self.n_transition_params() + self.m() * self.domain.free_coords().len()
    }

    /// `(row, col)` of every transition parameter, in vector order.
    pub fn transition_params(&self) -> Vec<(usize, usize)> {
        let m = self.m();
        let mut out = Vec::with_capacity(m * (m - 1));
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// `(state, coord)` of every emission parameter, in vector order.
    pub fn beta_params(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for c in self.domain.free_coords() {
            for s in 0..self.m() {
                out.push((s, c));
            }
        }
        out
    }

    /// Human-readable names, 1-based like `p12`, `beta1`, `beta2[1]`.
    pub fn theta_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> =
            self.transition_params().iter().map(|(i, j)| format!("p{}_{}", i + 1, j + 1)).collect();
        let d = self.family.beta_dim();
        for (s, c) in self.beta_params() {
            if d == 1 {
                labels.push(format!("beta{}", s + 1));
            } else {
                labels.push(format!("beta{}[{}]", s + 1, c));
            }
        }
        labels
    }

    /// Packs the model into its flat parameter vector.
    pub fn theta(&self) -> ThetaVector {
        let mut out = Vec::with_capacity(self.theta_dim());
        for (i, j) in self.transition_params() {
            out.push(self.transition[(i, j)]);
        }
        for (s, c) in self.beta_params() {
            out.push(self.betas[s][c]);
        }
        ThetaVector(out)
    }

    /// Rebuilds a model of this shape from a flat vector. Diagonal entries
    /// are `1 - sum of the row's off-diagonals`; fixed emission coordinates
    /// are taken from `self`. No projection or validation is applied.
    pub fn with_theta(&self, theta: &[f64]) -> Result<HmmModel> {
        let expected = self.theta_dim();
        if theta.len() != expected {
            return Err(MeeError::Shape { expected, found: theta.len() });
        }
        let m = self.m();
        let mut transition = DMatrix::zeros(m, m);
        let mut it = theta.iter();
        for (i, j) in self.transition_params() {
            transition[(i, j)] = *it.next().unwrap();
        }
        for i in 0..m {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| transition[(i, j)]).sum();
            transition[(i, i)] = 1.0 - off;
        }
        let mut betas = self.betas.clone();
        for (s, c) in self.beta_params() {
            betas[s][c] = *it.next().unwrap();
        }
        Ok(HmmModel { transition, betas, family: self.family, domain: self.domain.clone() })
    }

    /// Same shape and domain, new transition matrix and emission parameters.
    pub fn with_parameters(&self, transition: DMatrix<f64>, betas: Vec<Vec<f64>>) -> Result<HmmModel> {
        HmmModel::new(transition, betas, self.family, self.domain.clone())
    }

    /// Reports every violated model or domain constraint.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let m = self.m();
        let p = &self.transition;
        for i in 0..m {
            let sum: f64 = p.row(i).iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                out.push(Violation {
                    kind: ViolationKind::RowSum { row: i },
                    message: format!("row {i} sums to {sum}"),
                });
            }
            for j in 0..m {
                let v = p[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    out.push(Violation {
                        kind: ViolationKind::EntryRange { row: i, col: j },
                        message: format!("P[{i},{j}] = {v} is outside [0, 1]"),
                    });
                } else if i != j && v < self.domain.p_floor {
                    out.push(Violation {
                        kind: ViolationKind::TransitionFloor { row: i, col: j },
                        message: format!("P[{i},{j}] = {v} is below the transition floor {}", self.domain.p_floor),
                    });
                }
            }
        }
        for (s, beta) in self.betas.iter().enumerate() {
            if let Err(e) = self.family.check_beta(beta) {
                out.push(Violation {
                    kind: ViolationKind::FamilyDomain { state: s },
                    message: format!("beta {s}: {e}"),
                });
            }
            for (c, &b) in beta.iter().enumerate() {
                let (lo, hi) = (self.domain.beta_lo[c], self.domain.beta_hi[c]);
                if !(b >= lo && b <= hi) {
                    out.push(Violation {
                        kind: ViolationKind::BetaBounds { state: s, coord: c },
                        message: format!("beta {s}[{c}] = {b} is outside [{lo}, {hi}]"),
                    });
                }
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let dist = euclidean(&self.betas[i], &self.betas[j]);
                if dist < self.domain.delta_sep {
                    out.push(Violation {
                        kind: ViolationKind::Separation { first: i, second: j },
                        message: format!(
                            "β separation violated between states {i} and {j}: distance {dist} < {}",
                            self.domain.delta_sep
                        ),
                    });
                }
            }
        }
        let wanted = match self.domain.order {
            StateOrder::Ascending => Some(Ordering::Less),
            StateOrder::Descending => Some(Ordering::Greater),
            StateOrder::Unordered => None,
        };
        if let Some(wanted) = wanted {
            for s in 0..m.saturating_sub(1) {
                if lex_cmp(&self.betas[s], &self.betas[s + 1]) != wanted {
                    out.push(Violation {
                        kind: ViolationKind::Ordering { state: s },
                        message: format!("state ordering violated between states {s} and {}", s + 1),
                    });
                }
            }
        }
        out
    }

    /// Largest symbol of the (truncated) signal support for discrete
    /// families; `None` for continuous ones.
    ///
    /// Poisson supports are cut where the upper tail drops below
    /// [`POISSON_TAIL`] for the largest rate among the states and, when
    /// finite, the domain's upper bound.
    pub fn support_max(&self) -> Option<u32> {
        match self.family {
            SignalFamily::Poisson => {
                let mut rate = self.betas.iter().map(|b| b[0]).fold(0.0, f64::max);
                let hi = self.domain.beta_hi[0];
                if hi.is_finite() {
                    rate = rate.max(hi);
                }
                Some(poisson_cutoff(rate, POISSON_TAIL))
            }
            SignalFamily::Categorical { symbols } => Some(symbols as u32 - 1),
            _ => None,
        }
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Lexicographic comparison; NaN compares equal.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}
