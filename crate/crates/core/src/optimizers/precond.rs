use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub const RMSPROP_DECAY: f64 = 0.99;
const DIAG_EPS: f64 = 1e-8;
const DIAG_FLOOR: f64 = 1e-12;

/// Symmetric positive definite operator `C` of preconditioned TANGO.
#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    Identity,
    Fixed(DMatrix<f64>),
    /// `a ← ρa + (1−ρ)g̃²`, `C = diag(1/√(a + 1e-8))`.
    RmsProp {
        rho: f64,
        accumulator: DVector<f64>,
    },
    /// `C⁻¹ = diag(mean g̃²) + 1e-8`.
    InvDiagFisher {
        sum_sq: DVector<f64>,
        count: u64,
    },
}

/// Serializable description of a preconditioner.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum PreconditionerSpec {
    #[default]
    Identity,
    FixedMatrix {
        rows: Vec<Vec<f64>>,
    },
    Rmsprop {
        #[cfg_attr(feature = "serde", serde(default = "default_rho"))]
        rho: f64,
    },
    InvDiagFisher,
}

#[cfg(feature = "serde")]
fn default_rho() -> f64 {
    RMSPROP_DECAY
}

impl PreconditionerSpec {
    pub fn build(&self, dim: usize) -> Result<Preconditioner> {
        match self {
            PreconditionerSpec::Identity => Ok(Preconditioner::Identity),
            PreconditionerSpec::FixedMatrix { rows } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::DimensionMismatch {
                        what: "preconditioner matrix",
                        expected: dim,
                        got: rows.len(),
                    });
                }
                Preconditioner::fixed(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
            PreconditionerSpec::Rmsprop { rho } => Preconditioner::rmsprop(dim, *rho),
            PreconditionerSpec::InvDiagFisher => Ok(Preconditioner::inv_diag_fisher(dim)),
        }
    }
}

impl Preconditioner {
    pub fn fixed(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || linalg::max_asymmetry(&matrix) > 1e-12 * (1.0 + matrix.amax()) {
            return Err(Error::InvalidParameter(
                "preconditioner must be a symmetric matrix".into(),
            ));
        }
        let lo = linalg::min_eigenvalue(&matrix);
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
        }
        Ok(Preconditioner::Fixed(matrix))
    }

    pub fn rmsprop(dim: usize, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!(
                "rmsprop decay must be in [0, 1), got {rho}"
            )));
        }
        Ok(Preconditioner::RmsProp {
            rho,
            accumulator: DVector::zeros(dim),
        })
    }

    pub fn inv_diag_fisher(dim: usize) -> Self {
        Preconditioner::InvDiagFisher {
            sum_sq: DVector::zeros(dim),
            count: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Preconditioner::Identity)
    }

    /// Feeds one pseudo-gradient into the adaptive diagonal estimates.
    pub fn observe(&mut self, g_tilde: &DVector<f64>) {
        match self {
            Preconditioner::RmsProp { rho, accumulator } => {
                for (a, g) in accumulator.iter_mut().zip(g_tilde.iter()) {
                    *a = *rho * *a + (1.0 - *rho) * g * g;
                }
            }
            Preconditioner::InvDiagFisher { sum_sq, count } => {
                for (a, g) in sum_sq.iter_mut().zip(g_tilde.iter()) {
                    *a += g * g;
                }
                *count += 1;
            }
            Preconditioner::Identity | Preconditioner::Fixed(_) => {}
        }
    }

    fn diagonal_entry(&self, i: usize) -> f64 {
        match self {
            Preconditioner::RmsProp { accumulator, .. } => {
                (1.0 / libm::sqrt(accumulator[i] + DIAG_EPS)).max(DIAG_FLOOR)
            }
            Preconditioner::InvDiagFisher { sum_sq, count } => {
                let mean = if *count == 0 {
                    0.0
                } else {
                    sum_sq[i] / *count as f64
                };
                (1.0 / (mean + DIAG_EPS)).max(DIAG_FLOOR)
            }
            Preconditioner::Identity => 1.0,
            Preconditioner::Fixed(m) => m[(i, i)],
        }
    }

    /// `C u`.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            Preconditioner::Identity => u.clone(),
            Preconditioner::Fixed(m) => m * u,
            _ => DVector::from_fn(u.len(), |i, _| self.diagonal_entry(i) * u[i]),
        }
    }

    /// Dense form of `C`, for inspection.
    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Preconditioner::Identity => DMatrix::identity(dim, dim),
            Preconditioner::Fixed(m) => m.clone(),
            _ => DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| self.diagonal_entry(i))),
        }
    }
}
