use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signature of the base block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    /// (-,+,...,+) on the base block; worldvolumes carry a timelike direction.
    Lorentzian,
    /// All-plus base block, used to check curvature against classic surfaces.
    Euclidean,
}

/// Flat base spacetime extended by one Kaluza-Klein direction with constant `g44`.
///
/// Components are ordered `0..base_dim` for the base block and `base_dim` for the
/// extra direction. The metric is diagonal, so mixed base/extra components vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct KKBackground {
    base_dim: usize,
    g44: f64,
    signature: Signature,
    diag: Vec<f64>,
}

impl KKBackground {
    pub fn new(base_dim: usize, g44: f64) -> Result<Self> {
        Self::with_signature(base_dim, g44, Signature::Lorentzian)
    }

    pub fn euclidean(base_dim: usize, g44: f64) -> Result<Self> {
        Self::with_signature(base_dim, g44, Signature::Euclidean)
    }

    pub fn with_signature(base_dim: usize, g44: f64, signature: Signature) -> Result<Self> {
        if base_dim < 2 {
            return Err(Error::InvalidBackground(format!(
                "base dimension must be at least 2, got {base_dim}"
            )));
        }
        if !(g44.is_finite() && g44 > 0.0) {
            return Err(Error::InvalidBackground(format!(
                "g44 must be positive, got {g44}"
            )));
        }
        let mut diag = vec![1.0; base_dim + 1];
        if signature == Signature::Lorentzian {
            diag[0] = -1.0;
        }
        diag[base_dim] = g44;
        Ok(Self {
            base_dim,
            g44,
            signature,
            diag,
        })
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn total_dim(&self) -> usize {
        self.base_dim + 1
    }

    /// Index of the Kaluza-Klein component.
    pub fn kk_index(&self) -> usize {
        self.base_dim
    }

    pub fn g44(&self) -> f64 {
        self.g44
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn is_lorentzian(&self) -> bool {
        self.signature == Signature::Lorentzian
    }

    /// Diagonal entry `g_{μμ}`.
    #[inline]
    pub fn metric(&self, mu: usize) -> f64 {
        self.diag[mu]
    }

    /// Diagonal entry `g^{μμ}`.
    #[inline]
    pub fn inverse_metric(&self, mu: usize) -> f64 {
        1.0 / self.diag[mu]
    }

    /// `g(u, v)` for contravariant component slices.
    #[inline]
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for mu in 0..self.diag.len() {
            s += self.diag[mu] * u[mu] * v[mu];
        }
        s
    }

    /// `g(u, v)` restricted to the base block.
    #[inline]
    pub fn base_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for mu in 0..self.base_dim {
            s += self.diag[mu] * u[mu] * v[mu];
        }
        s
    }

    /// Lower the index of a contravariant vector.
    pub fn lower(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.diag).map(|(x, g)| x * g).collect()
    }

    /// Background curvature vanishes identically for the flat base.
    pub fn is_flat(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_g44() {
        assert!(KKBackground::new(4, -1.0).is_err());
        assert!(KKBackground::new(4, 0.0).is_err());
        assert!(KKBackground::new(1, 1.0).is_err());
    }

    #[test]
    fn block_diagonal_metric() {
        let bg = KKBackground::new(4, 2.5).unwrap();
        assert_eq!(bg.total_dim(), 5);
        assert_eq!(bg.metric(0), -1.0);
        assert_eq!(bg.metric(3), 1.0);
        assert_eq!(bg.metric(4), 2.5);
        let u = [0.0, 0.0, 0.0, 1.0, 0.0];
        let w = [0.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(bg.dot(&u, &w), 0.0);
        assert_eq!(bg.dot(&w, &w), 2.5);
    }
}
