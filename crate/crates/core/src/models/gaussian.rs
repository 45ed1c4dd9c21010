use nalgebra::{dvector, DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, FisherMatrix, Model, ParamVector};
use crate::error::{Error, Result};

/// Bound on `|ln σ|`; outside it the model reports an invalid parameter.
pub const LN_SIGMA_BOUND: f64 = 20.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Univariate `N(μ, σ²)` parameterized by `θ = (μ, ln σ)`. Inputs are empty.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianModel;

impl GaussianModel {
    fn unpack(&self, theta: &ParamVector) -> Result<(f64, f64)> {
        self.check_params(theta)?;
        Ok((theta[0], theta[1]))
    }
}

impl Model for GaussianModel {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        0
    }

    fn check_params(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != 2 {
            return Err(Error::DimensionMismatch {
                what: "parameter",
                expected: 2,
                got: theta.len(),
            });
        }
        if !theta[0].is_finite() || !theta[1].is_finite() {
            return Err(Error::InvalidParameter(
                "non-finite parameter component".into(),
            ));
        }
        if theta[1].abs() > LN_SIGMA_BOUND {
            return Err(Error::InvalidParameter(alloc::format!(
                "ln sigma = {} outside [-{LN_SIGMA_BOUND}, {LN_SIGMA_BOUND}]",
                theta[1]
            )));
        }
        Ok(())
    }

    fn log_loss(&self, theta: &ParamVector, _x: &[f64], y: f64) -> Result<f64> {
        let (mu, ln_sigma) = self.unpack(theta)?;
        let r = y - mu;
        Ok(0.5 * r * r * libm::exp(-2.0 * ln_sigma) + ln_sigma + HALF_LN_TWO_PI)
    }

    fn grad_log_loss(&self, theta: &ParamVector, _x: &[f64], y: f64) -> Result<DVector<f64>> {
        let (mu, ln_sigma) = self.unpack(theta)?;
        let r = y - mu;
        let inv_var = libm::exp(-2.0 * ln_sigma);
        Ok(dvector![-r * inv_var, 1.0 - r * r * inv_var])
    }

    fn sample_output(&self, theta: &ParamVector, _x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let (mu, ln_sigma) = self.unpack(theta)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(mu + libm::exp(ln_sigma) * z)
    }

    fn exact_fisher(&self, theta: &ParamVector, _dataset: &Dataset) -> Result<FisherMatrix> {
        let (_, ln_sigma) = self.unpack(theta)?;
        FisherMatrix::new(DMatrix::from_diagonal(&dvector![
            libm::exp(-2.0 * ln_sigma),
            2.0
        ]))
    }

    fn mean_gradient(&self, theta: &ParamVector, dataset: &Dataset) -> Result<DVector<f64>> {
        let (mu, ln_sigma) = self.unpack(theta)?;
        let inv_var = libm::exp(-2.0 * ln_sigma);
        let (mut sum_r, mut sum_r2) = (0.0, 0.0);
        for s in dataset.samples() {
            let r = s.y - mu;
            sum_r += r;
            sum_r2 += r * r;
        }
        let n = dataset.len() as f64;
        Ok(dvector![-sum_r / n * inv_var, 1.0 - sum_r2 / n * inv_var])
    }

    fn output_cdf(&self, theta: &ParamVector, _x: &[f64], y: f64) -> Option<f64> {
        let (mu, ln_sigma) = self.unpack(theta).ok()?;
        Some(0.5 * (1.0 + libm::erf((y - mu) / (libm::exp(ln_sigma) * core::f64::consts::SQRT_2))))
    }
}
