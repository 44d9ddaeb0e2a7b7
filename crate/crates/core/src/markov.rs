//! Stationary law of the hidden chain, its parameter derivatives, and
//! ergodicity coefficients.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{MeeError, Result};

/// Default number of terms kept in the derivative series.
pub const DEFAULT_SERIES_TERMS: usize = 30;
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub mu: Vec<f64>,
    pub iterations: usize,
    /// `||mu P - mu||_1` at the returned vector.
    pub residual: f64,
}

/// Minorization `P^{n0}(i, j) >= kappa * nu0(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoeblinCertificate {
    pub n0: usize,
    pub kappa: f64,
    pub nu0: Vec<f64>,
}

impl DoeblinCertificate {
    /// Checks the minorization against `p`.
    pub fn holds_for(&self, p: &DMatrix<f64>) -> bool {
        let pk = matrix_power(p, self.n0);
        let m = p.nrows();
        (0..m).all(|i| (0..m).all(|j| pk[(i, j)] >= self.kappa * self.nu0[j] - 1e-15))
    }

    /// Geometric contraction `(1 - kappa)^{floor(k / n0)}`.
    pub fn rate(&self, k: usize) -> f64 {
        libm::pow(1.0 - self.kappa, (k / self.n0) as f64)
    }

    /// `1 + 2 n0 / (1 - sqrt(1 - kappa))`, the factor bounding long-run
    /// variances by one-step variances.
    pub fn variance_factor(&self) -> f64 {
        variance_factor(self.n0, self.kappa)
    }
}

pub fn variance_factor(n0: usize, kappa: f64) -> f64 {
    1.0 + 2.0 * n0 as f64 / (1.0 - libm::sqrt(1.0 - kappa))
}

/// Checks that `p` is square with rows summing to one.
pub fn check_stochastic(p: &DMatrix<f64>) -> Result<()> {
    let m = p.nrows();
    if m == 0 || p.ncols() != m {
        return Err(MeeError::invalid("transition matrix must be square and non-empty"));
    }
    for i in 0..m {
        let s: f64 = p.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-10 || p.row(i).iter().any(|&v| !(v >= -1e-15)) {
            return Err(MeeError::invalid("transition matrix is not row-stochastic"));
        }
    }
    Ok(())
}

/// Row vector times matrix.
pub(crate) fn vec_mat(v: &[f64], p: &DMatrix<f64>, out: &mut [f64]) {
    let m = p.nrows();
    for j in 0..m {
        let mut acc = 0.0;
        for i in 0..m {
            acc += v[i] * p[(i, j)];
        }
        out[j] = acc;
    }
}

pub fn matrix_power(p: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let m = p.nrows();
    let mut out = DMatrix::identity(m, m);
    let mut base = p.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            out = &out * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    out
}

/// Invariant law by power iteration from the uniform vector.
pub fn stationary(p: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<StationaryResult> {
    check_stochastic(p)?;
    let m = p.nrows();
    let mut mu = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        vec_mat(&mu, p, &mut next);
        residual = mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        if residual <= tol {
            return Ok(StationaryResult { mu, iterations: it, residual });
        }
        let s: f64 = next.iter().sum();
        for (a, b) in mu.iter_mut().zip(&next) {
            *a = b / s;
        }
    }
    Err(MeeError::NonConvergence { iterations: max_iter, residual })
}

/// `dP / d p_ij` for the off-diagonal parameter `(i, j)`: `+1` at `(i, j)`
/// and `-1` at `(i, i)`.
pub fn transition_derivative(m: usize, row: usize, col: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m, m);
    d[(row, col)] = 1.0;
    d[(row, row)] = -1.0;
    d
}

/// Partial sums `sum_{k < terms} (mu dP) P^k` for each derivative matrix.
///
/// Each `dP` must have zero row sums. The summation stops early once a
/// term's L1 norm underflows below `1e-300` of the first one.
pub fn stationary_grad(mu: &[f64], p: &DMatrix<f64>, dp_list: &[DMatrix<f64>], terms: usize) -> Result<Vec<Vec<f64>>> {
    let m = p.nrows();
    if mu.len() != m {
        return Err(MeeError::Shape { expected: m, found: mu.len() });
    }
    let mut out = Vec::with_capacity(dp_list.len());
    for dp in dp_list {
        if dp.nrows() != m || dp.ncols() != m {
            return Err(MeeError::Shape { expected: m, found: dp.nrows() });
        }
        for i in 0..m {
            let s: f64 = dp.row(i).iter().sum();
            if s.abs() > 1e-12 {
                return Err(MeeError::invalid("derivative of a stochastic matrix must have zero row sums"));
            }
        }
        let mut start = vec![0.0; m];
        vec_mat(mu, dp, &mut start);
        out.push(geometric_series(&start, p, terms));
    }
    Ok(out)
}

/// `sum_{k < terms} r P^k` for a zero-sum row vector `r`.
pub(crate) fn geometric_series(start: &[f64], p: &DMatrix<f64>, terms: usize) -> Vec<f64> {
    let m = start.len();
    let mut term = start.to_vec();
    let mut next = vec![0.0; m];
    let mut acc = vec![0.0; m];
    let first: f64 = term.iter().map(|v| v.abs()).sum();
    for _ in 0..terms {
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t;
        }
        let norm: f64 = term.iter().map(|v| v.abs()).sum();
        if norm <= first * 1e-300 {
            break;
        }
        vec_mat(&term, p, &mut next);
        core::mem::swap(&mut term, &mut next);
    }
    // Re-centre: the exact partial sums have zero total mass.
    let drift = acc.iter().sum::<f64>() / m as f64;
    for a in acc.iter_mut() {
        *a -= drift;
    }
    acc
}

/// Second derivatives `d^2 mu / (d theta_a d theta_b)` for a chain that is
/// linear in its parameters (`d^2 P = 0`):
/// `sum_k (dmu_a dP_b + dmu_b dP_a) P^k`.
pub fn stationary_hess(
    p: &DMatrix<f64>,
    dp_list: &[DMatrix<f64>],
    dmu: &[Vec<f64>],
    terms: usize,
) -> Vec<Vec<Vec<f64>>> {
    let m = p.nrows();
    let n = dp_list.len();
    let mut out = vec![vec![vec![0.0; m]; n]; n];
    let mut t1 = vec![0.0; m];
    let mut t2 = vec![0.0; m];
    for a in 0..n {
        for b in a..n {
            vec_mat(&dmu[a], &dp_list[b], &mut t1);
            vec_mat(&dmu[b], &dp_list[a], &mut t2);
            let start: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| x + y).collect();
            let s = geometric_series(&start, p, terms);
            out[a][b] = s.clone();
            out[b][a] = s;
        }
    }
    out
}

/// Dobrushin coefficient: largest total-variation distance between rows.
pub fn dobrushin(p: &DMatrix<f64>) -> f64 {
    let m = p.nrows();
    let mut best: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let tv: f64 = 0.5 * (0..m).map(|k| (p[(i, k)] - p[(j, k)]).abs()).sum::<f64>();
            best = best.max(tv);
        }
    }
    best
}

/// First `n0 <= n0_max` with `kappa = m * min_ij P^{n0}(i, j) > 0`, using a
/// uniform `nu0`.
pub fn doeblin_search(p: &DMatrix<f64>, n0_max: usize) -> Option<DoeblinCertificate> {
    let m = p.nrows();
    let mut pk = DMatrix::identity(m, m);
    for n0 in 1..=n0_max {
        pk = &pk * p;
        let min = pk.iter().cloned().fold(f64::INFINITY, f64::min);
        let kappa = (m as f64 * min).min(1.0);
        if kappa > 0.0 {
            return Some(DoeblinCertificate { n0, kappa, nu0: vec![1.0 / m as f64; m] });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b])
    }

    #[test]
    fn stationary_two_state() {
        let r = stationary(&p2(0.7, 0.6), 1e-12, 10_000).unwrap();
        assert!((r.mu[0] - 6.0 / 13.0).abs() < 1e-12);
        assert!((r.mu[1] - 7.0 / 13.0).abs() < 1e-12);
        assert!(r.residual <= 1e-12);
        let r = stationary(&p2(0.5, 0.5), 1e-12, 10).unwrap();
        assert_eq!(r.mu, vec![0.5, 0.5]);
        let r = stationary(&p2(0.8, 0.7), 1e-12, 10_000).unwrap();
        assert!((r.mu[0] - 7.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_non_convergence() {
        let slow = DMatrix::from_row_slice(2, 2, &[1.0 - 1e-6, 1e-6, 3e-6, 1.0 - 3e-6]);
        assert!(matches!(stationary(&slow, 1e-12, 10), Err(MeeError::NonConvergence { .. })));
        assert!(stationary(&slow, 1e-12, 100_000_000).is_ok());
    }

    #[test]
    fn symmetric_chain_has_flat_derivative() {
        let t = 0.3;
        let p = p2(t, t);
        let mu = stationary(&p, 1e-14, 1000).unwrap().mu;
        // d/dt of [[1-t, t], [t, 1-t]].
        let dp = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let g = stationary_grad(&mu, &p, &[dp], 30).unwrap();
        assert!(g[0][0].abs() < 1e-14 && g[0][1].abs() < 1e-14);
    }

    #[test]
    fn two_state_closed_form_derivative() {
        let p = p2(0.7, 0.6);
        let mu = stationary(&p, 1e-14, 1000).unwrap().mu;
        let g = stationary_grad(&mu, &p, &[transition_derivative(2, 0, 1)], 30).unwrap();
        // mu_1 = p21 / (p12 + p21)
        assert!((g[0][0] - (-0.6 / 1.69)).abs() < 1e-10);
        assert!(g[0].iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn derivative_input_checks() {
        let p = p2(0.7, 0.6);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(stationary_grad(&[0.5, 0.5], &p, &[bad], 30).is_err());
    }

    #[test]
    fn dobrushin_examples() {
        assert!((dobrushin(&p2(0.7, 0.6)) - 0.3).abs() < 1e-15);
        assert_eq!(dobrushin(&p2(0.5, 0.5)), 0.0);
        assert_eq!(dobrushin(&DMatrix::identity(2, 2)), 1.0);
    }

    #[test]
    fn doeblin_examples() {
        let c = doeblin_search(&p2(0.7, 0.6), 3).unwrap();
        assert_eq!(c.n0, 1);
        assert!((c.kappa - 0.6).abs() < 1e-15);
        assert!(c.holds_for(&p2(0.7, 0.6)));
        assert!(doeblin_search(&DMatrix::identity(2, 2), 10).is_none());
        assert!(doeblin_search(&p2(1.0, 1.0), 50).is_none());
    }

    #[test]
    fn doeblin_needs_two_steps() {
        // Zero entry at (0, 0) but P^2 strictly positive.
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.5]);
        let c = doeblin_search(&p, 5).unwrap();
        assert_eq!(c.n0, 2);
        assert!(c.holds_for(&p));
    }

    #[test]
    fn variance_factor_values() {
        assert!((variance_factor(1, 1.0) - 3.0).abs() < 1e-15);
        assert!((variance_factor(1, 0.6) - 6.441_6).abs() < 1e-4);
    }
}
