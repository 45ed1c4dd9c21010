use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, FisherMatrix, Model, ParamVector, Sample};
use crate::error::{Error, Result};

const MIN_NOISE_VARIANCE: f64 = 1e-8;

/// How the output noise variance `σ²` of the quadratic loss is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum NoiseVariance {
    Fixed {
        sigma2: f64,
    },
    /// Starts at `initial` and then tracks the running mean squared residual
    /// of the observed samples.
    RunningMse {
        initial: f64,
    },
}

impl Default for NoiseVariance {
    fn default() -> Self {
        NoiseVariance::Fixed { sigma2: 1.0 }
    }
}

/// Scalar-output linear regression, `ℓ(y|x) = (y − θᵀx)² / (2σ²)`.
///
/// The loss omits the `½ ln(2πσ²)` normalizer, which does not depend on θ.
/// Pseudo-outputs are drawn from `N(θᵀx, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegression {
    input_dim: usize,
    mode: NoiseVariance,
    sigma2: f64,
    sum_sq_residual: f64,
    observed: u64,
}

impl LinearRegression {
    pub fn new(input_dim: usize, mode: NoiseVariance) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter(
                "linear regression needs at least one input".into(),
            ));
        }
        let sigma2 = match mode {
            NoiseVariance::Fixed { sigma2 } | NoiseVariance::RunningMse { initial: sigma2 } => {
                sigma2
            }
        };
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self {
            input_dim,
            mode,
            sigma2,
            sum_sq_residual: 0.0,
            observed: 0,
        })
    }

    pub fn with_unit_noise(input_dim: usize) -> Self {
        Self::new(input_dim, NoiseVariance::default()).expect("unit noise is valid")
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn mode(&self) -> NoiseVariance {
        self.mode
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn prediction(&self, theta: &ParamVector, x: &[f64]) -> Result<f64> {
        self.check_params(theta)?;
        self.check_input(x)?;
        Ok(theta.iter().zip(x).map(|(t, xi)| t * xi).sum())
    }
}

impl Model for LinearRegression {
    fn name(&self) -> &'static str {
        "linear_regression"
    }

    fn param_dim(&self) -> usize {
        self.input_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<f64> {
        let r = y - self.prediction(theta, x)?;
        Ok(0.5 * r * r / self.sigma2)
    }

    fn grad_log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<DVector<f64>> {
        let r = y - self.prediction(theta, x)?;
        let scale = -r / self.sigma2;
        Ok(DVector::from_iterator(
            x.len(),
            x.iter().map(|xi| scale * xi),
        ))
    }

    fn sample_output(&self, theta: &ParamVector, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let mean = self.prediction(theta, x)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(mean + libm::sqrt(self.sigma2) * z)
    }

    fn exact_fisher(&self, theta: &ParamVector, dataset: &Dataset) -> Result<FisherMatrix> {
        self.check_params(theta)?;
        let d = self.input_dim;
        let mut acc = DMatrix::zeros(d, d);
        for s in dataset.samples() {
            self.check_input(&s.x)?;
            let x = DVector::from_column_slice(&s.x);
            acc.ger(1.0, &x, &x, 1.0);
        }
        FisherMatrix::new(acc / (dataset.len() as f64 * self.sigma2))
    }

    fn hessian(&self, theta: &ParamVector, x: &[f64], _y: f64) -> Result<DMatrix<f64>> {
        self.check_params(theta)?;
        self.check_input(x)?;
        let x = DVector::from_column_slice(x);
        Ok(&x * x.transpose() / self.sigma2)
    }

    fn is_quadratic(&self) -> bool {
        true
    }

    fn output_cdf(&self, theta: &ParamVector, x: &[f64], y: f64) -> Option<f64> {
        let mean = self.prediction(theta, x).ok()?;
        Some(0.5 * (1.0 + libm::erf((y - mean) / libm::sqrt(2.0 * self.sigma2))))
    }

    fn observe(&mut self, theta: &ParamVector, sample: &Sample) {
        if let NoiseVariance::RunningMse { .. } = self.mode {
            if let Ok(pred) = self.prediction(theta, &sample.x) {
                let r = sample.y - pred;
                self.sum_sq_residual += r * r;
                self.observed += 1;
                self.sigma2 = (self.sum_sq_residual / self.observed as f64).max(MIN_NOISE_VARIANCE);
            }
        }
    }
}
