//! Generalized eigenproblems whose operators are sums of Kronecker terms.

use crate::error::{Error, Result};
use crate::kron_solve::MultiTermSystem;
use crate::Mat;

/// `L(φ) = (1/k) F(φ)` for `φ ∈ ℝ^{N×M}` with
///
/// * `L(φ) = −Σ A φ B + Σ C φ D` (the loss operator), and
/// * `F(φ) = Σ E φ F` (the source operator, stored as `+` terms only).
///
/// Both the dense and the low-rank power iterations are written against this
/// form; the neutron-diffusion operators and the two-sided model problem only
/// differ in which matrices they supply.
#[derive(Debug, Clone)]
pub struct SeparableProblem {
    pub lhs: MultiTermSystem,
    pub source: MultiTermSystem,
}

impl SeparableProblem {
    pub fn new(lhs: MultiTermSystem, source: MultiTermSystem) -> Result<Self> {
        if (lhs.n, lhs.m) != (source.n, source.m) {
            return Err(Error::Dimension(format!(
                "loss operator acts on {}×{}, source on {}×{}",
                lhs.n, lhs.m, source.n, source.m
            )));
        }
        if !source.left_a.is_empty() {
            return Err(Error::Dimension("source operator must consist of `+` terms".into()));
        }
        Ok(Self { lhs, source })
    }

    /// Rows of `φ` (spatial cells).
    pub fn n_space(&self) -> usize {
        self.lhs.n
    }

    /// Columns of `φ` (energy groups).
    pub fn n_energy(&self) -> usize {
        self.lhs.m
    }

    pub fn apply_lhs(&self, phi: &Mat) -> Result<Mat> {
        self.lhs.apply(phi)
    }

    pub fn apply_source(&self, phi: &Mat) -> Result<Mat> {
        self.source.apply(phi)
    }
}
