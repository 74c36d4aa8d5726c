//! Probability mass functions on the nonnegative integers with explicit
//! truncation bookkeeping.

use crate::error::{Error, Result};

/// Tolerance on `Σ probs + tail_mass = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A p.m.f. stored on `offset ..= offset + probs.len() - 1`, with the mass
/// beyond the last stored point kept in `tail_mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    offset: usize,
    probs: Vec<f64>,
    tail_mass: f64,
}

impl Pmf {
    pub fn new(offset: usize, probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        let pmf = Self::new_unchecked(offset, probs, tail_mass);
        pmf.validate()?;
        Ok(pmf)
    }

    pub(crate) fn new_unchecked(offset: usize, probs: Vec<f64>, tail_mass: f64) -> Self {
        Self {
            offset,
            probs,
            tail_mass,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::param("a pmf needs at least one support point"));
        }
        if let Some(i) = self.probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param(format!(
                "probability at {} is {}",
                i + self.offset,
                self.probs[i]
            )));
        }
        if !(self.tail_mass.is_finite() && self.tail_mass >= 0.0) {
            return Err(Error::param(format!("tail mass {} is invalid", self.tail_mass)));
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::param(format!("pmf mass sums to {total}")));
        }
        Ok(())
    }

    pub fn point_mass(at: usize) -> Self {
        Self::new_unchecked(at, vec![1.0], 0.0)
    }

    /// Builds a pmf from `probs[k]` for `k = offset..`; trailing zeros are trimmed.
    pub fn from_probs(offset: usize, mut probs: Vec<f64>) -> Result<Self> {
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        Self::new(offset, probs, 0.0)
    }

    /// Smallest index represented (0 or 1 in practice).
    pub fn min_support(&self) -> usize {
        self.offset
    }

    /// Largest index represented explicitly.
    pub fn max_index(&self) -> usize {
        self.offset + self.probs.len() - 1
    }

    /// Largest index with nonzero explicit mass.
    pub fn max_support(&self) -> usize {
        let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        self.offset + last
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    /// `P(X = k)`; zero outside the explicit support.
    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        if k < self.offset {
            return 0.0;
        }
        self.probs.get(k - self.offset).copied().unwrap_or(0.0)
    }

    /// `P(X ≥ k)`, including the tail mass.
    pub fn survival(&self, k: usize) -> f64 {
        let from = k.saturating_sub(self.offset);
        let above: f64 = if from >= self.probs.len() {
            0.0
        } else {
            self.probs[from..].iter().sum()
        };
        above + self.tail_mass
    }

    /// `Σ_k P(X = k) z^k` over the explicit support.
    pub fn pgf(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate().rev() {
            acc = acc * z + p;
            if i == 0 {
                break;
            }
        }
        acc * z.powi(self.offset as i32)
    }

    /// The same explicit probabilities with the tail mass discarded.
    pub fn without_tail(&self) -> Self {
        Self::new_unchecked(self.offset, self.probs.clone(), 0.0)
    }

    /// Dense vector indexed from 0 up to `max_index`.
    pub fn dense_from_zero(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.max_index() + 1];
        out[self.offset..].copy_from_slice(&self.probs);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized_mass() {
        assert!(Pmf::new(0, vec![0.5, 0.4], 0.0).is_err());
        assert!(Pmf::new(0, vec![0.5, 0.4], 0.1).is_ok());
        assert!(Pmf::new(1, vec![1.2, -0.2], 0.0).is_err());
    }

    #[test]
    fn survival_and_pgf() {
        let p = Pmf::new(1, vec![0.5, 0.25, 0.25], 0.0).unwrap();
        assert_eq!(p.survival(1), 1.0);
        assert_eq!(p.survival(2), 0.5);
        assert_eq!(p.survival(4), 0.0);
        assert!((p.pgf(0.5) - (0.25 + 0.0625 + 0.03125)).abs() < 1e-15);
        assert_eq!(p.max_support(), 3);
        let t = Pmf::new(0, vec![0.5, 0.4], 0.1).unwrap();
        assert!((t.survival(2) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn from_probs_trims_zeros() {
        let p = Pmf::from_probs(0, vec![0.25, 0.75, 0.0, 0.0]).unwrap();
        assert_eq!(p.max_index(), 1);
    }
}
