//! Stationary pair density `Q(y, y') = sum_ij mu_i p_ij q_i(y) q_j(y')` and
//! its first two derivatives in the flat parameter vector.
//!
//! `Q` factors per `(i, j)` into a transition weight `A_ij = mu_i p_ij`,
//! which depends only on the transition parameters, and an emission
//! product `q_i(y) q_j(y')`, which depends only on the emission parameters.
//! The workspace caches `A` and its derivatives once per parameter value;
//! each pair evaluation then only touches the emission side. Emission
//! densities are rescaled by their per-argument maximum before summation so
//! that large counts do not underflow.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{MeeError, Result};
use crate::markov::{self, DEFAULT_STATIONARY_TOL};
use crate::model::HmmModel;

/// Power-iteration budget used when building a workspace.
pub const STATIONARY_MAX_ITER: usize = 1_000_000;

/// Per-parameter cache of the stationary law and transition weights.
#[derive(Debug, Clone)]
pub struct PairDensityWorkspace {
    model: HmmModel,
    m: usize,
    d: usize,
    free: Vec<usize>,
    trans_params: Vec<(usize, usize)>,
    mu: Vec<f64>,
    dmu: Vec<Vec<f64>>,
    /// `A_ij`, row-major.
    a: Vec<f64>,
    /// `dA_ij / d theta_l`, indexed `[ij * n_trans + l]`.
    da: Vec<f64>,
    /// `d^2 A_ij / d theta_l d theta_k`, indexed `[(ij * n_trans + l) * n_trans + k]`.
    d2a: Option<Vec<f64>>,
    series_terms: usize,
}

impl PairDensityWorkspace {
    /// First-order workspace: density and gradient.
    pub fn new(model: &HmmModel, series_terms: usize) -> Result<Self> {
        Self::build(model, series_terms, false)
    }

    /// Workspace that can also evaluate Hessians.
    pub fn with_hessian(model: &HmmModel, series_terms: usize) -> Result<Self> {
        Self::build(model, series_terms, true)
    }

    fn build(model: &HmmModel, series_terms: usize, second: bool) -> Result<Self> {
        if series_terms == 0 {
            return Err(MeeError::invalid("series truncation must be at least 1"));
        }
        for b in model.betas() {
            model.family().check_beta(b)?;
        }
        let p = model.transition();
        let m = model.m();
        let mu = markov::stationary(p, DEFAULT_STATIONARY_TOL, STATIONARY_MAX_ITER)?.mu;
        let trans_params = model.transition_params();
        let nt = trans_params.len();
        let dps: Vec<DMatrix<f64>> =
            trans_params.iter().map(|&(i, j)| markov::transition_derivative(m, i, j)).collect();
        let dmu = markov::stationary_grad(&mu, p, &dps, series_terms)?;

        let mut a = vec![0.0; m * m];
        let mut da = vec![0.0; m * m * nt];
        for i in 0..m {
            for j in 0..m {
                let ij = i * m + j;
                a[ij] = mu[i] * p[(i, j)];
                for l in 0..nt {
                    da[ij * nt + l] = dmu[l][i] * p[(i, j)] + mu[i] * dps[l][(i, j)];
                }
            }
        }
        let d2a = if second {
            let d2mu = markov::stationary_hess(p, &dps, &dmu, series_terms);
            let mut out = vec![0.0; m * m * nt * nt];
            for i in 0..m {
                for j in 0..m {
                    let ij = i * m + j;
                    for l in 0..nt {
                        for k in 0..nt {
                            out[(ij * nt + l) * nt + k] =
                                d2mu[l][k][i] * p[(i, j)] + dmu[l][i] * dps[k][(i, j)] + dmu[k][i] * dps[l][(i, j)];
                        }
                    }
                }
            }
            Some(out)
        } else {
            None
        };
        Ok(PairDensityWorkspace {
            model: model.clone(),
            m,
            d: model.family().beta_dim(),
            free: model.domain().free_coords(),
            trans_params,
            mu,
            dmu,
            a,
            da,
            d2a,
            series_terms,
        })
    }

    pub fn model(&self) -> &HmmModel {
        &self.model
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `d mu / d theta_l` for each transition parameter.
    pub fn dmu(&self) -> &[Vec<f64>] {
        &self.dmu
    }

    pub fn series_terms(&self) -> usize {
        self.series_terms
    }

    /// Dimension of the flat parameter vector.
    pub fn dim(&self) -> usize {
        self.trans_params.len() + self.m * self.free.len()
    }

    /// `A_ij = mu_i p_ij`.
    pub fn pair_weight(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.m + j]
    }

    pub fn has_hessian(&self) -> bool {
        self.d2a.is_some()
    }

    pub fn evaluator(&self) -> PairEvaluator<'_> {
        PairEvaluator::new(self)
    }

    pub fn q2_density(&self, y: f64, y_next: f64) -> Result<f64> {
        Ok(libm::exp(self.q2_log_density(y, y_next)?))
    }

    pub fn q2_log_density(&self, y: f64, y_next: f64) -> Result<f64> {
        self.evaluator().log_q(y, y_next)
    }

    /// `grad_theta log Q(y, y')`.
    pub fn q2_grad_log(&self, y: f64, y_next: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.dim()];
        self.evaluator().grad(y, y_next, &mut g)?;
        Ok(g)
    }

    /// `hess_theta log Q(y, y')`. Needs a workspace built with
    /// [`PairDensityWorkspace::with_hessian`].
    pub fn q2_hess_log(&self, y: f64, y_next: f64) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        let mut g = vec![0.0; dim];
        let mut h = vec![0.0; dim * dim];
        self.evaluator().hess(y, y_next, &mut g, &mut h)?;
        Ok(DMatrix::from_row_slice(dim, dim, &h))
    }
}

/// Reusable scratch for evaluating many pairs against one workspace.
pub struct PairEvaluator<'a> {
    ws: &'a PairDensityWorkspace,
    lq: [Vec<f64>; 2],
    scaled: [Vec<f64>; 2],
    g: [Vec<f64>; 2],
    h: [Vec<f64>; 2],
    t: Vec<f64>,
    row: Vec<f64>,
    col: Vec<f64>,
}

impl<'a> PairEvaluator<'a> {
    fn new(ws: &'a PairDensityWorkspace) -> Self {
        let (m, d) = (ws.m, ws.d);
        PairEvaluator {
            ws,
            lq: [vec![0.0; m], vec![0.0; m]],
            scaled: [vec![0.0; m], vec![0.0; m]],
            g: [vec![0.0; m * d], vec![0.0; m * d]],
            h: [vec![0.0; m * d * d], vec![0.0; m * d * d]],
            t: vec![0.0; m * m],
            row: vec![0.0; m],
            col: vec![0.0; m],
        }
    }

    /// Fills per-state log densities, rescaled densities, and the
    /// `T_ij = A_ij u_i v_j` table; returns `(S, shift)` with
    /// `Q = S * exp(shift)`.
    fn prepare(&mut self, y: f64, y_next: f64) -> Result<(f64, f64)> {
        let ws = self.ws;
        let fam = ws.model.family();
        fam.check_signal(y)?;
        fam.check_signal(y_next)?;
        let m = ws.m;
        let mut shift = 0.0;
        for (slot, &val) in [y, y_next].iter().enumerate() {
            let mut top = f64::NEG_INFINITY;
            for s in 0..m {
                let l = fam.ln_q(ws.model.beta(s), val);
                self.lq[slot][s] = l;
                top = top.max(l);
            }
            if top == f64::NEG_INFINITY {
                return Err(MeeError::ZeroDensity { y, y_next });
            }
            for s in 0..m {
                self.scaled[slot][s] = libm::exp(self.lq[slot][s] - top);
            }
            shift += top;
        }
        let mut sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                let t = ws.a[i * m + j] * self.scaled[0][i] * self.scaled[1][j];
                self.t[i * m + j] = t;
                sum += t;
            }
        }
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(MeeError::ZeroDensity { y, y_next });
        }
        Ok((sum, shift))
    }

    pub fn log_q(&mut self, y: f64, y_next: f64) -> Result<f64> {
        let (sum, shift) = self.prepare(y, y_next)?;
        Ok(libm::log(sum) + shift)
    }

    fn emission_derivatives(&mut self, y: f64, y_next: f64, second: bool) {
        let ws = self.ws;
        let fam = ws.model.family();
        let (m, d) = (ws.m, ws.d);
        for (slot, &val) in [y, y_next].iter().enumerate() {
            for s in 0..m {
                // States with vanishing density contribute nothing; skip
                // their (possibly infinite) scores.
                if self.scaled[slot][s] == 0.0 {
                    self.g[slot][s * d..(s + 1) * d].fill(0.0);
                    if second {
                        self.h[slot][s * d * d..(s + 1) * d * d].fill(0.0);
                    }
                    continue;
                }
                fam.grad_ln_q_into(ws.model.beta(s), val, &mut self.g[slot][s * d..(s + 1) * d]);
                if second {
                    fam.hess_ln_q_into(ws.model.beta(s), val, &mut self.h[slot][s * d * d..(s + 1) * d * d]);
                }
            }
        }
        for s in 0..m {
            self.row[s] = (0..m).map(|j| self.t[s * m + j]).sum();
            self.col[s] = (0..m).map(|i| self.t[i * m + s]).sum();
        }
    }

    /// Writes `grad log Q` into `out` and returns `log Q`.
    pub fn grad(&mut self, y: f64, y_next: f64, out: &mut [f64]) -> Result<f64> {
        let (sum, shift) = self.prepare(y, y_next)?;
        self.emission_derivatives(y, y_next, false);
        self.fill_grad(sum, out);
        Ok(libm::log(sum) + shift)
    }

    fn fill_grad(&self, sum: f64, out: &mut [f64]) {
        let ws = self.ws;
        let (m, d) = (ws.m, ws.d);
        let nt = ws.trans_params.len();
        for l in 0..nt {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    acc += ws.da[(i * m + j) * nt + l] * self.scaled[0][i] * self.scaled[1][j];
                }
            }
            out[l] = acc / sum;
        }
        for (ci, &c) in ws.free.iter().enumerate() {
            for s in 0..m {
                out[nt + ci * m + s] = (self.row[s] * self.g[0][s * d + c] + self.col[s] * self.g[1][s * d + c]) / sum;
            }
        }
    }

    /// Writes `grad log Q` and the row-major Hessian of `log Q`; returns
    /// `log Q`.
    pub fn hess(&mut self, y: f64, y_next: f64, grad: &mut [f64], hess: &mut [f64]) -> Result<f64> {
        let ws = self.ws;
        let d2a = ws.d2a.as_ref().ok_or_else(|| MeeError::invalid("workspace was built without second-order terms"))?;
        let (sum, shift) = self.prepare(y, y_next)?;
        self.emission_derivatives(y, y_next, true);
        self.fill_grad(sum, grad);
        let (m, d) = (ws.m, ws.d);
        let nt = ws.trans_params.len();
        let dim = ws.dim();
        let (u, v) = (&self.scaled[0], &self.scaled[1]);
        let (gy, gz) = (&self.g[0], &self.g[1]);
        let (hy, hz) = (&self.h[0], &self.h[1]);

        // Second derivatives of Q divided by Q.
        for l in 0..nt {
            for k in l..nt {
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        acc += d2a[((i * m + j) * nt + l) * nt + k] * u[i] * v[j];
                    }
                }
                hess[l * dim + k] = acc / sum;
            }
        }
        for l in 0..nt {
            for (ci, &c) in ws.free.iter().enumerate() {
                for s in 0..m {
                    let mut first = 0.0;
                    let mut second = 0.0;
                    for j in 0..m {
                        first += ws.da[(s * m + j) * nt + l] * u[s] * v[j];
                    }
                    for i in 0..m {
                        second += ws.da[(i * m + s) * nt + l] * u[i] * v[s];
                    }
                    let col = nt + ci * m + s;
                    hess[l * dim + col] = (first * gy[s * d + c] + second * gz[s * d + c]) / sum;
                }
            }
        }
        let nb = ws.free.len() * m;
        for p in 0..nb {
            let (ci, s) = (p / m, p % m);
            let c = ws.free[ci];
            for q in p..nb {
                let (ei, t) = (q / m, q % m);
                let e = ws.free[ei];
                let mut acc = self.t[s * m + t] * gy[s * d + c] * gz[t * d + e]
                    + self.t[t * m + s] * gz[s * d + c] * gy[t * d + e];
                if s == t {
                    acc += self.row[s] * (gy[s * d + c] * gy[s * d + e] + hy[s * d * d + c * d + e]);
                    acc += self.col[s] * (gz[s * d + c] * gz[s * d + e] + hz[s * d * d + c * d + e]);
                }
                hess[(nt + p) * dim + nt + q] = acc / sum;
            }
        }
        // Subtract the outer product of the score and mirror.
        for r in 0..dim {
            for c in r..dim {
                let val = hess[r * dim + c] - grad[r] * grad[c];
                hess[r * dim + c] = val;
                hess[c * dim + r] = val;
            }
        }
        Ok(libm::log(sum) + shift)
    }
}
