//! Integration rules against emission laws and the pair density.
//!
//! Discrete families integrate exactly over their (truncated) support.
//! Gaussian families use Gauss-Hermite rules centred on each state's
//! component, so an expectation under the mixture `Q` is a weighted sum of
//! per-component tensor rules.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{MeeError, Result};
use crate::model::{HmmModel, SignalFamily};
use crate::pairdist::PairDensityWorkspace;

pub const DEFAULT_HERMITE_ORDER: usize = 40;

/// Nodes and weights of the `order`-point rule for `int f(x) exp(-x^2) dx`
/// (Golub-Welsch).
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(MeeError::invalid("Gauss-Hermite order must be at least 1"));
    }
    let mut jacobi = DMatrix::zeros(order, order);
    for k in 1..order {
        let b = libm::sqrt(k as f64 / 2.0);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let sqrt_pi = libm::sqrt(core::f64::consts::PI);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], sqrt_pi * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// A rule `(nodes, weights)` integrating against one state's emission law.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Per-state rules. Discrete families enumerate their support (Poisson up
/// to the model's truncation point); Gaussian families map a Hermite rule
/// onto each state's mean and variance.
pub fn state_rules(model: &HmmModel, hermite_order: usize) -> Result<Vec<StateRule>> {
    let family = model.family();
    match family {
        SignalFamily::Poisson | SignalFamily::Categorical { .. } => {
            let top = model.support_max().expect("discrete family has a support bound");
            let nodes: Vec<f64> = (0..=top).map(|y| y as f64).collect();
            (0..model.m())
                .map(|s| {
                    let weights = nodes.iter().map(|&y| family.density(model.beta(s), y)).collect::<Result<_>>()?;
                    Ok(StateRule { nodes: nodes.clone(), weights })
                })
                .collect()
        }
        SignalFamily::GaussianKnownVar { .. } | SignalFamily::GaussianFull => {
            let (x, w) = gauss_hermite(hermite_order)?;
            let sqrt_pi = libm::sqrt(core::f64::consts::PI);
            (0..model.m())
                .map(|s| {
                    let beta = model.beta(s);
                    let (mean, var) = match *family {
                        SignalFamily::GaussianKnownVar { variance } => (beta[0], variance),
                        _ => (beta[0], 0.5 / beta[1]),
                    };
                    let scale = libm::sqrt(2.0 * var);
                    Ok(StateRule {
                        nodes: x.iter().map(|&t| mean + scale * t).collect(),
                        weights: w.iter().map(|&v| v / sqrt_pi).collect(),
                    })
                })
                .collect()
        }
    }
}

/// Weighted pair nodes approximating `Q`: `E_Q f ~ sum w f(y, y')`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairQuadrature {
    pub points: Vec<(f64, f64, f64)>,
    /// `1 - sum of weights`; the mass lost to support truncation.
    pub discarded_mass: f64,
}

/// Pair rule under the workspace's model. Discrete families use the exact
/// pair law on the truncated support; Gaussian families use the product of
/// state rules for every hidden pair `(i, j)`, weighted by `mu_i p_ij`.
pub fn pair_quadrature(ws: &PairDensityWorkspace, hermite_order: usize) -> Result<PairQuadrature> {
    let model = ws.model();
    let rules = state_rules(model, hermite_order)?;
    let m = model.m();
    let mut points = Vec::new();
    if model.family().is_discrete() {
        let nodes = &rules[0].nodes;
        let mut eval = ws.evaluator();
        for &y in nodes {
            for &z in nodes {
                let q = match eval.log_q(y, z) {
                    Ok(l) => libm::exp(l),
                    Err(MeeError::ZeroDensity { .. }) => 0.0,
                    Err(e) => return Err(e),
                };
                if q > 0.0 {
                    points.push((y, z, q));
                }
            }
        }
    } else {
        for i in 0..m {
            for j in 0..m {
                let a = ws.pair_weight(i, j);
                if a == 0.0 {
                    continue;
                }
                let (ri, rj) = (&rules[i], &rules[j]);
                for (&y, &wy) in ri.nodes.iter().zip(&ri.weights) {
                    for (&z, &wz) in rj.nodes.iter().zip(&rj.weights) {
                        points.push((y, z, a * wy * wz));
                    }
                }
            }
        }
    }
    let total: f64 = points.iter().map(|p| p.2).sum();
    Ok(PairQuadrature { points, discarded_mass: 1.0 - total })
}
