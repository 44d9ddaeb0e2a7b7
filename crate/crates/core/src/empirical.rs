//! Empirical law of contiguous observation pairs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{MeeError, Result};

/// The pair statistic `L_n = (1/n) sum_k delta_{(y_{k-1}, y_k)}`.
#[derive(Debug, Clone, PartialEq)]
pub enum PairEmpirical {
    /// Sparse counts of integer-valued pairs; total count `n`.
    Counts { counts: BTreeMap<(u32, u32), u64>, n: usize },
    /// The ordered pair list for continuous signals.
    Stream { pairs: Vec<(f64, f64)> },
}

fn check_len(signals: &[f64]) -> Result<()> {
    if signals.len() < 2 {
        return Err(MeeError::invalid("need at least two observations to form a pair"));
    }
    Ok(())
}

fn as_symbol(y: f64) -> Result<u32> {
    if y >= 0.0 && y.fract() == 0.0 && y <= u32::MAX as f64 {
        Ok(y as u32)
    } else {
        Err(MeeError::invalid("counts mode needs non-negative integer signals"))
    }
}

/// Counts of contiguous pairs of a discrete sequence.
pub fn pair_counts(signals: &[f64]) -> Result<PairEmpirical> {
    check_len(signals)?;
    let symbols: Vec<u32> = signals.iter().map(|&y| as_symbol(y)).collect::<Result<_>>()?;
    let mut counts = BTreeMap::new();
    for w in symbols.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0u64) += 1;
    }
    Ok(PairEmpirical::Counts { counts, n: signals.len() - 1 })
}

/// The contiguous pair list `((y_0, y_1), ..., (y_{n-1}, y_n))`.
pub fn pair_stream(signals: &[f64]) -> Result<PairEmpirical> {
    check_len(signals)?;
    Ok(PairEmpirical::Stream { pairs: signals.windows(2).map(|w| (w[0], w[1])).collect() })
}

impl PairEmpirical {
    /// Number of pairs.
    pub fn n(&self) -> usize {
        match self {
            PairEmpirical::Counts { n, .. } => *n,
            PairEmpirical::Stream { pairs } => pairs.len(),
        }
    }

    pub fn is_counts(&self) -> bool {
        matches!(self, PairEmpirical::Counts { .. })
    }

    /// Distinct pairs with their empirical weight. In stream mode every
    /// pair carries weight `1/n`.
    pub fn weighted_pairs(&self) -> Vec<((f64, f64), f64)> {
        match self {
            PairEmpirical::Counts { counts, n } => {
                let n = *n as f64;
                counts.iter().map(|(&(a, b), &c)| ((a as f64, b as f64), c as f64 / n)).collect()
            }
            PairEmpirical::Stream { pairs } => {
                let w = 1.0 / pairs.len() as f64;
                pairs.iter().map(|&p| (p, w)).collect()
            }
        }
    }

    /// `sum L(y, y') f(y, y')`.
    pub fn expectation<F: FnMut(f64, f64) -> f64>(&self, mut f: F) -> f64 {
        match self {
            PairEmpirical::Counts { counts, n } => {
                counts.iter().map(|(&(a, b), &c)| c as f64 * f(a as f64, b as f64)).sum::<f64>() / *n as f64
            }
            PairEmpirical::Stream { pairs } => pairs.iter().map(|&(a, b)| f(a, b)).sum::<f64>() / pairs.len() as f64,
        }
    }

    /// Converts a stream of integer-valued pairs into counts.
    pub fn to_counts(&self) -> Result<PairEmpirical> {
        match self {
            PairEmpirical::Counts { .. } => Ok(self.clone()),
            PairEmpirical::Stream { pairs } => {
                let mut counts = BTreeMap::new();
                for &(a, b) in pairs {
                    *counts.entry((as_symbol(a)?, as_symbol(b)?)).or_insert(0u64) += 1;
                }
                Ok(PairEmpirical::Counts { counts, n: pairs.len() })
            }
        }
    }

    /// Dense probability table over `0..symbols` squared (row-major by the
    /// first coordinate). Pairs outside the table are folded into symbol
    /// `symbols - 1` when `fold_tail` is set, otherwise rejected.
    pub fn dense(&self, symbols: usize, fold_tail: bool) -> Result<Vec<f64>> {
        let counts = self.to_counts()?;
        let PairEmpirical::Counts { counts, n } = counts else { unreachable!() };
        let mut out = alloc::vec![0.0; symbols * symbols];
        let clamp = |s: u32| -> Result<usize> {
            let s = s as usize;
            if s < symbols {
                Ok(s)
            } else if fold_tail {
                Ok(symbols - 1)
            } else {
                Err(MeeError::invalid("signal outside the finite support"))
            }
        };
        for (&(a, b), &c) in &counts {
            out[clamp(a)? * symbols + clamp(b)?] += c as f64 / n as f64;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn counts_examples() {
        let l = pair_counts(&[0.0, 1.0, 0.0]).unwrap();
        let w = l.weighted_pairs();
        assert_eq!(w, vec![((0.0, 1.0), 0.5), ((1.0, 0.0), 0.5)]);
        let l = pair_counts(&[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(l.weighted_pairs(), vec![((5.0, 5.0), 1.0)]);
        assert_eq!(l.n(), 3);
    }

    #[test]
    fn stream_examples() {
        let l = pair_stream(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(l, PairEmpirical::Stream { pairs: vec![(1.0, 2.0), (2.0, 3.0)] });
        assert_eq!(l.n(), 2);
    }

    #[test]
    fn too_short() {
        assert!(pair_counts(&[1.0]).is_err());
        assert!(pair_stream(&[]).is_err());
        assert!(pair_counts(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn dense_table() {
        let l = pair_counts(&[0.0, 1.0, 7.0, 0.0]).unwrap();
        let d = l.dense(3, true).unwrap();
        assert_eq!(d[1], 1.0 / 3.0);
        assert_eq!(d[1 * 3 + 2], 1.0 / 3.0);
        assert_eq!(d[2 * 3], 1.0 / 3.0);
        assert!(l.dense(3, false).is_err());
    }
}
