//! Fisher information of the pair law, the long-run covariance of the pair
//! score, and the resulting sandwich covariance of the estimator.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::empirical::{pair_counts, pair_stream};
use crate::error::{MeeError, Result};
use crate::estimator::{objective_and_gradient, PairData, Sequential};
use crate::linalg::{self, inv_sqrt_spd, min_eigenvalue, quantile, symmetrize};
use crate::markov::{doeblin_search, stationary, DoeblinCertificate, DEFAULT_SERIES_TERMS};
use crate::model::HmmModel;
use crate::pairdist::PairDensityWorkspace;
use crate::quadrature::{pair_quadrature, state_rules, DEFAULT_HERMITE_ORDER};
use crate::simulate::{replication_seed, rng_for, simulate, standard_normal, SimulationConfig};

/// Tolerance on negative eigenvalues of matrices that must be PSD.
pub const PSD_TOL: f64 = 1e-8;
/// Smallest eigenvalue accepted by [`invert_spd`].
pub const MIN_INFORMATION_EIGENVALUE: f64 = 1e-10;
pub const DEFAULT_MAX_LAG: usize = 200;
/// Lag terms with Frobenius norm below this end the lag sum.
pub const LAG_EARLY_STOP: f64 = 1e-10;
/// A last lag term above this means the lag truncation was too short.
pub const LAG_WARN: f64 = 1e-8;

fn frobenius(a: &DMatrix<f64>) -> f64 {
    libm::sqrt(a.iter().map(|v| v * v).sum())
}

fn outer_add(acc: &mut DMatrix<f64>, w: f64, a: &[f64], b: &[f64]) {
    for (r, ar) in a.iter().enumerate() {
        for (c, bc) in b.iter().enumerate() {
            acc[(r, c)] += w * ar * bc;
        }
    }
}

fn check_psd(a: &DMatrix<f64>) -> Result<()> {
    let min = min_eigenvalue(a);
    if min < -PSD_TOL {
        return Err(MeeError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// `I_2(theta) = E_Q[grad log Q grad log Q^T]`, integrated with the pair
/// rule of [`pair_quadrature`].
pub fn fisher_info(ws: &PairDensityWorkspace, hermite_order: usize) -> Result<DMatrix<f64>> {
    let dim = ws.dim();
    let rule = pair_quadrature(ws, hermite_order)?;
    let mut eval = ws.evaluator();
    let mut g = vec![0.0; dim];
    let mut out = DMatrix::zeros(dim, dim);
    for &(y, z, w) in &rule.points {
        eval.grad(y, z, &mut g)?;
        outer_add(&mut out, w, &g, &g);
    }
    let out = symmetrize(&out);
    check_psd(&out)?;
    Ok(out)
}

/// `-E_Q[hess log Q]`; equals [`fisher_info`] up to integration error.
pub fn hessian_information(ws: &PairDensityWorkspace, hermite_order: usize) -> Result<DMatrix<f64>> {
    if !ws.has_hessian() {
        return Err(MeeError::invalid("workspace was built without second derivatives"));
    }
    let dim = ws.dim();
    let rule = pair_quadrature(ws, hermite_order)?;
    let mut eval = ws.evaluator();
    let mut g = vec![0.0; dim];
    let mut h = vec![0.0; dim * dim];
    let mut out = DMatrix::zeros(dim, dim);
    for &(y, z, w) in &rule.points {
        eval.hess(y, z, &mut g, &mut h)?;
        for (k, v) in h.iter().enumerate() {
            out[(k / dim, k % dim)] -= w * v;
        }
    }
    Ok(symmetrize(&out))
}

/// Inverse of a symmetric positive definite matrix, with
/// `||A A^{-1} - I||_inf < 1e-8` checked.
pub fn invert_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(MeeError::Shape { expected: n, found: a.ncols() });
    }
    let min = min_eigenvalue(a);
    if !(min >= MIN_INFORMATION_EIGENVALUE) {
        return Err(MeeError::SingularInformation { min_eigenvalue: min });
    }
    let chol = symmetrize(a).cholesky().ok_or(MeeError::SingularInformation { min_eigenvalue: min })?;
    let inv = symmetrize(&chol.inverse());
    let resid = (a * &inv - DMatrix::identity(n, n)).amax();
    if !(resid < 1e-8) {
        return Err(MeeError::SingularInformation { min_eigenvalue: min });
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaExact {
    pub matrix: DMatrix<f64>,
    /// Number of lag terms summed.
    pub lags_used: usize,
    /// Frobenius norm of the last lag term.
    pub last_lag_norm: f64,
    /// The lag budget ran out before the terms fell below `LAG_WARN`.
    pub truncated: bool,
}

/// Long-run covariance of the pair score under the stationary chain,
/// `Cov(f_0, f_0) + sum_{k=1}^{K} (Cov(f_0, f_k) + Cov(f_k, f_0))` with
/// `f_k = grad log Q(Y_k, Y_{k+1})`. Lag `k >= 2` uses the joint law
/// `mu(a) p_ab P^{k-1}(b, c) p_cd` of the four hidden states; lag 1 shares
/// `Y_1` and is integrated over three states.
pub fn gamma_exact(ws: &PairDensityWorkspace, max_lag: usize, hermite_order: usize) -> Result<GammaExact> {
    if max_lag == 0 {
        return Err(MeeError::invalid("lag truncation must be at least 1"));
    }
    let model = ws.model();
    let m = model.m();
    let dim = ws.dim();
    let rules = state_rules(model, hermite_order)?;
    let p = model.transition();
    let mu = ws.mu();
    let mut eval = ws.evaluator();

    // grads[a][b][i * nb + j]: score at (node i of state a, node j of state b).
    let mut grads: Vec<Vec<Vec<Vec<f64>>>> = Vec::with_capacity(m);
    for a in 0..m {
        let mut row = Vec::with_capacity(m);
        for b in 0..m {
            let (ra, rb) = (&rules[a], &rules[b]);
            let mut table = Vec::with_capacity(ra.nodes.len() * rb.nodes.len());
            for (&y, &wy) in ra.nodes.iter().zip(&ra.weights) {
                for (&z, &wz) in rb.nodes.iter().zip(&rb.weights) {
                    let mut g = vec![0.0; dim];
                    if wy > 0.0 && wz > 0.0 {
                        eval.grad(y, z, &mut g)?;
                    }
                    table.push(g);
                }
            }
            row.push(table);
        }
        grads.push(row);
    }

    let mut gamma = DMatrix::zeros(dim, dim);
    // Lag 0 and the conditional means U_ab = E[f | X_0 = a, X_1 = b].
    let mut cond = vec![vec![vec![0.0; dim]; m]; m];
    for a in 0..m {
        for b in 0..m {
            let (ra, rb) = (&rules[a], &rules[b]);
            let nb = rb.nodes.len();
            let weight = mu[a] * p[(a, b)];
            for (i, wy) in ra.weights.iter().enumerate() {
                for (j, wz) in rb.weights.iter().enumerate() {
                    let g = &grads[a][b][i * nb + j];
                    let w = wy * wz;
                    for (c, v) in cond[a][b].iter_mut().zip(g) {
                        *c += w * v;
                    }
                    if weight > 0.0 {
                        outer_add(&mut gamma, weight * w, g, g);
                    }
                }
            }
        }
    }

    // Lag 1: E[f(Y0, Y1) f(Y1, Y2)^T], summing over the shared Y1.
    let mut lag1 = DMatrix::zeros(dim, dim);
    for b in 0..m {
        let rb = &rules[b];
        let nb = rb.nodes.len();
        for (j, &w1) in rb.weights.iter().enumerate() {
            if w1 == 0.0 {
                continue;
            }
            let mut left = vec![0.0; dim];
            for a in 0..m {
                let ra = &rules[a];
                let coef = mu[a] * p[(a, b)];
                for (i, &w0) in ra.weights.iter().enumerate() {
                    for (l, v) in left.iter_mut().zip(&grads[a][b][i * nb + j]) {
                        *l += coef * w0 * v;
                    }
                }
            }
            let mut right = vec![0.0; dim];
            for c in 0..m {
                let rc = &rules[c];
                let nc = rc.nodes.len();
                let coef = p[(b, c)];
                for (k, &w2) in rc.weights.iter().enumerate() {
                    for (r, v) in right.iter_mut().zip(&grads[b][c][j * nc + k]) {
                        *r += coef * w2 * v;
                    }
                }
            }
            outer_add(&mut lag1, w1, &left, &right);
        }
    }
    gamma += &lag1 + lag1.transpose();
    let mut last = frobenius(&lag1);
    let mut lags_used = 1;

    // Lags k >= 2 through u_b = sum_a mu_a p_ab U_ab and v_c = sum_d p_cd U_cd.
    let u: Vec<Vec<f64>> =
        (0..m).map(|b| (0..dim).map(|r| (0..m).map(|a| mu[a] * p[(a, b)] * cond[a][b][r]).sum()).collect()).collect();
    let v: Vec<Vec<f64>> =
        (0..m).map(|c| (0..dim).map(|r| (0..m).map(|d| p[(c, d)] * cond[c][d][r]).sum()).collect()).collect();
    let mut pk = p.clone();
    for _k in 2..=max_lag {
        if last < LAG_EARLY_STOP {
            break;
        }
        let mut term = DMatrix::zeros(dim, dim);
        for b in 0..m {
            for c in 0..m {
                outer_add(&mut term, pk[(b, c)], &u[b], &v[c]);
            }
        }
        gamma += &term + term.transpose();
        last = frobenius(&term);
        lags_used += 1;
        pk = &pk * p;
    }
    let matrix = symmetrize(&gamma);
    check_psd(&matrix)?;
    Ok(GammaExact { matrix, lags_used, last_lag_norm: last, truncated: last > LAG_WARN })
}

/// `n^{-1/2} sum_k grad log Q(y_{k-1}, y_k)` along one stationary-started
/// trajectory of `n` transitions.
pub fn replication_score(model: &HmmModel, n: usize, seed: u64, series_terms: usize) -> Result<Vec<f64>> {
    let mu = stationary(model.transition(), 1e-14, crate::pairdist::STATIONARY_MAX_ITER)?.mu;
    let traj = simulate(&SimulationConfig { model: model.clone(), initial: mu, n, seed })?;
    let data = if model.family().is_discrete() { pair_counts(&traj.signals)? } else { pair_stream(&traj.signals)? };
    let ws = PairDensityWorkspace::new(model, series_terms)?;
    let (_, g) = objective_and_gradient(&ws, &PairData::new(&data), &Sequential)?;
    let root = libm::sqrt(n as f64);
    Ok(g.iter().map(|v| -v * root).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    /// Entrywise Monte-Carlo standard errors.
    pub std_err: DMatrix<f64>,
    pub replications: usize,
}

/// Sample covariance of replicated vectors with entrywise standard errors.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Result<CovarianceEstimate> {
    let r = samples.len();
    if r < 2 {
        return Err(MeeError::invalid("need at least two replications"));
    }
    let dim = samples[0].len();
    let mean: Vec<f64> = (0..dim).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / r as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut sq = DMatrix::<f64>::zeros(dim, dim);
    for s in samples {
        for i in 0..dim {
            for j in 0..dim {
                let prod = (s[i] - mean[i]) * (s[j] - mean[j]);
                cov[(i, j)] += prod;
                sq[(i, j)] += prod * prod;
            }
        }
    }
    let rf = r as f64;
    let mut se = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let m1: f64 = cov[(i, j)] / rf;
            let var: f64 = (sq[(i, j)] / rf - m1 * m1).max(0.0);
            se[(i, j)] = libm::sqrt(var / rf);
        }
    }
    Ok(CovarianceEstimate { matrix: cov / (rf - 1.0), std_err: se, replications: r })
}

/// Monte-Carlo long-run covariance: sample covariance over `reps`
/// trajectories (seeds derived from `seed`) of [`replication_score`].
pub fn gamma_mc(model: &HmmModel, n: usize, reps: usize, seed: u64, series_terms: usize) -> Result<CovarianceEstimate> {
    let scores = (0..reps as u64)
        .map(|r| replication_score(model, n, replication_seed(seed, r), series_terms))
        .collect::<Result<Vec<_>>>()?;
    sample_covariance(&scores)
}

/// `I2^{-1} Gamma I2^{-1}`, symmetrized.
pub fn sandwich(i2: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = invert_spd(i2)?;
    Ok(symmetrize(&(&inv * gamma * &inv)))
}

/// Upper bound `(1 + 2 n0 / (1 - sqrt(1 - kappa))) I2^{-1}` on the sandwich.
pub fn cov_bound(i2_inv: &DMatrix<f64>, cert: &DoeblinCertificate) -> DMatrix<f64> {
    i2_inv * cert.variance_factor()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    /// `c_alpha`.
    pub critical_value: f64,
    /// `c_alpha / sqrt(n)`.
    pub threshold: f64,
    /// `|theta_hat - theta0|`.
    pub distance: f64,
    pub accept: bool,
}

/// Distance test of `theta = theta0`: `c_alpha` solves
/// `P(|I2^{-1/2} eta| < c_alpha sqrt(F)) = alpha` for standard normal `eta`
/// (sampled), `F` the certificate's variance factor; accept iff
/// `|theta_hat - theta0| <= c_alpha / sqrt(n)`.
#[allow(clippy::too_many_arguments)]
pub fn wald_test(
    theta_hat: &[f64],
    theta0: &[f64],
    n: usize,
    i2: &DMatrix<f64>,
    cert: &DoeblinCertificate,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<WaldTest> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(MeeError::invalid("alpha must lie in (1/2, 1)"));
    }
    let dim = theta0.len();
    if theta_hat.len() != dim || i2.nrows() != dim {
        return Err(MeeError::Shape { expected: dim, found: theta_hat.len() });
    }
    if samples == 0 || n == 0 {
        return Err(MeeError::invalid("sample size and n must be positive"));
    }
    let root = inv_sqrt_spd(i2, MIN_INFORMATION_EIGENVALUE)?;
    let mut rng = rng_for(seed, 0);
    let mut eta = vec![0.0; dim];
    let norms: Vec<f64> = (0..samples)
        .map(|_| {
            for e in eta.iter_mut() {
                *e = standard_normal(&mut rng);
            }
            let mut s = 0.0;
            for r in 0..dim {
                let v: f64 = (0..dim).map(|c| root[(r, c)] * eta[c]).sum();
                s += v * v;
            }
            libm::sqrt(s)
        })
        .collect();
    let critical_value = quantile(&norms, alpha) / libm::sqrt(cert.variance_factor());
    let threshold = critical_value / libm::sqrt(n as f64);
    let distance = crate::model::euclidean(theta_hat, theta0);
    Ok(WaldTest { critical_value, threshold, distance, accept: distance <= threshold })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticsConfig {
    pub hermite_order: usize,
    pub max_lag: usize,
    pub series_terms: usize,
    /// Largest `n0` tried by the Doeblin search.
    pub n0_max: usize,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        AsymptoticsConfig {
            hermite_order: DEFAULT_HERMITE_ORDER,
            max_lag: DEFAULT_MAX_LAG,
            series_terms: DEFAULT_SERIES_TERMS,
            n0_max: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticsReport {
    pub i2: DMatrix<f64>,
    pub i2_inv: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub sandwich: DMatrix<f64>,
    pub bound_matrix: DMatrix<f64>,
    pub certificate: DoeblinCertificate,
    pub gamma_lags: usize,
    pub gamma_truncated: bool,
    /// Smallest eigenvalue of `bound_matrix - sandwich`.
    pub bound_gap_min_eigenvalue: f64,
    pub i2_eigenvalues: Vec<f64>,
    pub config: AsymptoticsConfig,
}

/// Fisher information, exact long-run covariance, sandwich and its bound at
/// the model's parameter.
pub fn asymptotics_report(model: &HmmModel, cfg: &AsymptoticsConfig) -> Result<AsymptoticsReport> {
    let ws = PairDensityWorkspace::new(model, cfg.series_terms.max(DEFAULT_SERIES_TERMS))?;
    let i2 = fisher_info(&ws, cfg.hermite_order)?;
    let i2_inv = invert_spd(&i2)?;
    let g = gamma_exact(&ws, cfg.max_lag, cfg.hermite_order)?;
    let sand = sandwich(&i2, &g.matrix)?;
    let certificate = doeblin_search(model.transition(), cfg.n0_max)
        .ok_or_else(|| MeeError::domain("no Doeblin minorization found within the n0 budget"))?;
    let bound_matrix = cov_bound(&i2_inv, &certificate);
    let bound_gap_min_eigenvalue = min_eigenvalue(&(&bound_matrix - &sand));
    Ok(AsymptoticsReport {
        i2_eigenvalues: linalg::eigenvalues(&i2),
        i2,
        i2_inv,
        gamma: g.matrix,
        sandwich: sand,
        bound_matrix,
        certificate,
        gamma_lags: g.lags_used,
        gamma_truncated: g.truncated,
        bound_gap_min_eigenvalue,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SignalFamily;
    use crate::pairdist::tests::example1;

    #[test]
    fn single_state_poisson_information() {
        let model =
            HmmModel::with_default_domain(DMatrix::from_element(1, 1, 1.0), vec![vec![2.0]], SignalFamily::Poisson)
                .unwrap();
        let ws = PairDensityWorkspace::new(&model, 30).unwrap();
        let i2 = fisher_info(&ws, 40).unwrap();
        assert!((i2[(0, 0)] - 1.0).abs() < 1e-10);
        // Gamma: Var((Y0+Y1)/b - 2) + 2 Cov(lag 1) = 2/b + 2 * 1/b.
        let g = gamma_exact(&ws, 10, 40).unwrap();
        assert!((g.matrix[(0, 0)] - 2.0).abs() < 1e-8, "{g:?}");
    }

    #[test]
    fn invert_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((invert_spd(&id).unwrap() - &id).amax() < 1e-15);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 4.0]));
        let inv = invert_spd(&d).unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15 && (inv[(1, 1)] - 0.25).abs() < 1e-15);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(invert_spd(&sing), Err(MeeError::SingularInformation { .. })));
    }

    #[test]
    fn sandwich_and_bound_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((sandwich(&id, &id).unwrap() - &id).amax() < 1e-15);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!((sandwich(&a, &a).unwrap() - invert_spd(&a).unwrap()).amax() < 1e-12);
        let cert = DoeblinCertificate { n0: 1, kappa: 1.0, nu0: vec![0.5, 0.5] };
        assert!((cov_bound(&id, &cert)[(0, 0)] - 3.0).abs() < 1e-15);
        let cert = DoeblinCertificate { n0: 1, kappa: 0.6, nu0: vec![0.5, 0.5] };
        assert!((cov_bound(&id, &cert)[(1, 1)] - 6.441_6).abs() < 1e-4);
    }

    #[test]
    fn wald_examples() {
        let id = DMatrix::<f64>::identity(1, 1);
        let cert = DoeblinCertificate { n0: 1, kappa: 1.0, nu0: vec![1.0] };
        let t = wald_test(&[0.3], &[0.3], 100, &id, &cert, 0.95, 200_000, 5).unwrap();
        assert!(t.accept);
        assert!((t.critical_value - 1.959_964 / libm::sqrt(3.0)).abs() < 0.01, "{}", t.critical_value);
        let far = wald_test(&[0.3 + 2.0 * t.threshold], &[0.3], 100, &id, &cert, 0.95, 200_000, 5).unwrap();
        assert!(!far.accept);
        assert!(wald_test(&[0.3], &[0.3], 100, &id, &cert, 0.4, 10, 5).is_err());
    }

    #[test]
    fn iid_chain_lag_terms_vanish() {
        let model = example1()
            .with_parameters(DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.4, 0.6]), vec![vec![2.5], vec![0.5]])
            .unwrap();
        let ws = PairDensityWorkspace::new(&model, 30).unwrap();
        let g = gamma_exact(&ws, 50, 40).unwrap();
        assert!(g.lags_used <= 2, "{}", g.lags_used);
        assert!(!g.truncated);
        assert!((&g.matrix - g.matrix.transpose()).amax() < 1e-10);
    }

    #[test]
    fn gamma_monte_carlo_is_reproducible() {
        let a = gamma_mc(&example1(), 500, 10, 3, 30).unwrap();
        let b = gamma_mc(&example1(), 500, 10, 3, 30).unwrap();
        assert_eq!(a, b);
    }
}
