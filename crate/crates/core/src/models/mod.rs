//! Probabilistic models with hand-derived log-loss gradients.
//!
//! A model is `p_θ(y|x)`; its log-loss is `ℓ(y|x) = −ln p_θ(y|x)`. Every model
//! can draw pseudo-outputs from its own predictive law, which is what the
//! Fisher estimate `E[g̃ g̃ᵀ]` is built from.

mod builtin;
pub mod data;
mod gaussian;
mod linear;
mod softmax;

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linalg;

pub use builtin::BuiltinModel;
pub use gaussian::{GaussianModel, LN_SIGMA_BOUND};
pub use linear::{LinearRegression, NoiseVariance};
pub use softmax::SoftmaxRegression;

pub type ParamVector = DVector<f64>;

/// Central-difference step of the default Hessian.
pub const HESSIAN_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }

    pub fn output(y: f64) -> Self {
        Self { x: Vec::new(), y }
    }
}

/// A finite, nonempty, in-memory dataset with a common input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    input_dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let input_dim = first.x.len();
        for s in &samples {
            if s.x.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    what: "sample input",
                    expected: input_dim,
                    got: s.x.len(),
                });
            }
            if !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "dataset contains a non-finite value".into(),
                ));
            }
        }
        Ok(Self { samples, input_dim })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn get(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    /// Uniformly random sample.
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> &Sample {
        &self.samples[self.draw_index(rng)]
    }

    pub fn draw_index<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.samples.len())
    }
}

/// Symmetric positive semidefinite Fisher information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix(DMatrix<f64>);

impl FisherMatrix {
    pub const SYMMETRY_TOL: f64 = 1e-12;
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                what: "Fisher matrix columns",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if linalg::max_asymmetry(&matrix) > Self::SYMMETRY_TOL * (1.0 + matrix.amax()) {
            return Err(Error::InvalidParameter(
                "Fisher matrix is not symmetric".into(),
            ));
        }
        let lo = linalg::min_eigenvalue(&matrix);
        if lo < -Self::PSD_TOL * (1.0 + matrix.amax()) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        linalg::symmetric_eigenvalues(&self.0)
    }

    /// `J⁻¹ b` by Cholesky; fails if the smallest eigenvalue is below
    /// [`linalg::MIN_EIGENVALUE`].
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        linalg::spd_solve(&self.0, b, linalg::MIN_EIGENVALUE).map_err(|e| match e {
            Error::NotPositiveDefinite { min_eigenvalue } => {
                Error::SingularFisher { min_eigenvalue }
            }
            other => other,
        })
    }

    pub fn relative_frobenius_error(&self, reference: &FisherMatrix) -> f64 {
        (&self.0 - &reference.0).norm() / reference.0.norm()
    }
}

pub trait Model {
    fn name(&self) -> &'static str;

    fn param_dim(&self) -> usize;

    /// Length of the input `x` (0 for unsupervised models).
    fn input_dim(&self) -> usize;

    /// Checks dimension, finiteness and the model's valid region.
    fn check_params(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter",
                expected: self.param_dim(),
                got: theta.len(),
            });
        }
        if !linalg::all_finite(theta) {
            return Err(Error::InvalidParameter(
                "non-finite parameter component".into(),
            ));
        }
        Ok(())
    }

    fn log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<f64>;

    fn grad_log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<DVector<f64>>;

    /// Draws `ỹ ~ p_θ(·|x)`.
    fn sample_output(&self, theta: &ParamVector, x: &[f64], rng: &mut dyn RngCore) -> Result<f64>;

    /// Closed-form `J(θ)` averaged over the dataset inputs.
    fn exact_fisher(&self, _theta: &ParamVector, _dataset: &Dataset) -> Result<FisherMatrix> {
        Err(Error::UnsupportedModel {
            model: self.name(),
            operation: "exact Fisher",
        })
    }

    /// Per-sample Hessian of the log-loss. The default is a central
    /// difference of the analytic gradient.
    fn hessian(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<DMatrix<f64>> {
        finite_difference_hessian(self, theta, x, y, HESSIAN_FD_STEP)
    }

    /// True when the loss is quadratic in θ with a Hessian that does not
    /// depend on `y`.
    fn is_quadratic(&self) -> bool {
        false
    }

    /// CDF of the predictive law at `y`, for one-dimensional continuous outputs.
    fn output_cdf(&self, _theta: &ParamVector, _x: &[f64], _y: f64) -> Option<f64> {
        None
    }

    /// Hook for models whose noise scale tracks the data (running MSE mode).
    fn observe(&mut self, _theta: &ParamVector, _sample: &Sample) {}

    /// Average gradient over a non-empty dataset.
    fn mean_gradient(&self, theta: &ParamVector, dataset: &Dataset) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(self.param_dim());
        for s in dataset.samples() {
            acc += self.grad_log_loss(theta, &s.x, s.y)?;
        }
        Ok(acc / dataset.len() as f64)
    }
}

pub fn log_loss<M: Model + ?Sized>(model: &M, theta: &ParamVector, s: &Sample) -> Result<f64> {
    model.log_loss(theta, &s.x, s.y)
}

pub fn grad_log_loss<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    s: &Sample,
) -> Result<DVector<f64>> {
    model.grad_log_loss(theta, &s.x, s.y)
}

/// Exact average gradient over the whole dataset.
pub fn expected_gradient<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    dataset: &Dataset,
) -> Result<DVector<f64>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.mean_gradient(theta, dataset)
}

/// Average per-sample Hessian over the dataset.
pub fn mean_hessian<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    dataset: &Dataset,
) -> Result<DMatrix<f64>> {
    let d = model.param_dim();
    let mut acc = DMatrix::zeros(d, d);
    for s in dataset.samples() {
        acc += model.hessian(theta, &s.x, s.y)?;
    }
    Ok(acc / dataset.len() as f64)
}

/// Monte-Carlo Fisher: mean of `g̃ g̃ᵀ` over `n_samples` independent draws
/// of an input from the dataset and a pseudo-output from the model.
pub fn mc_fisher<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    dataset: &Dataset,
    n_samples: usize,
    rng: &mut dyn RngCore,
) -> Result<FisherMatrix> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    model.check_params(theta)?;
    let d = model.param_dim();
    let mut acc = DMatrix::zeros(d, d);
    for _ in 0..n_samples {
        let s = dataset.draw(rng);
        let y_tilde = model.sample_output(theta, &s.x, rng)?;
        let g = model.grad_log_loss(theta, &s.x, y_tilde)?;
        acc.ger(1.0, &g, &g, 1.0);
    }
    FisherMatrix::new(acc / n_samples as f64)
}

pub fn finite_difference_hessian<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    x: &[f64],
    y: f64,
    step: f64,
) -> Result<DMatrix<f64>> {
    let d = model.param_dim();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += step;
        minus[i] -= step;
        let column =
            (model.grad_log_loss(&plus, x, y)? - model.grad_log_loss(&minus, x, y)?) / (2.0 * step);
        h.set_column(i, &column);
    }
    Ok(linalg::symmetrize(&h))
}
