use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{
    Dataset, FisherMatrix, GaussianModel, LinearRegression, Model, ParamVector, Sample,
    SoftmaxRegression,
};
use crate::error::Result;

/// Closed set of models reachable from configuration files.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinModel {
    Gaussian(GaussianModel),
    Linear(LinearRegression),
    Softmax(SoftmaxRegression),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            BuiltinModel::Gaussian($m) => $e,
            BuiltinModel::Linear($m) => $e,
            BuiltinModel::Softmax($m) => $e,
        }
    };
}

impl Model for BuiltinModel {
    fn name(&self) -> &'static str {
        delegate!(self, m => m.name())
    }

    fn param_dim(&self) -> usize {
        delegate!(self, m => m.param_dim())
    }

    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }

    fn check_params(&self, theta: &ParamVector) -> Result<()> {
        delegate!(self, m => m.check_params(theta))
    }

    fn log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<f64> {
        delegate!(self, m => m.log_loss(theta, x, y))
    }

    fn grad_log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<DVector<f64>> {
        delegate!(self, m => m.grad_log_loss(theta, x, y))
    }

    fn sample_output(&self, theta: &ParamVector, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        delegate!(self, m => m.sample_output(theta, x, rng))
    }

    fn exact_fisher(&self, theta: &ParamVector, dataset: &Dataset) -> Result<FisherMatrix> {
        delegate!(self, m => m.exact_fisher(theta, dataset))
    }

    fn hessian(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<DMatrix<f64>> {
        delegate!(self, m => m.hessian(theta, x, y))
    }

    fn is_quadratic(&self) -> bool {
        delegate!(self, m => m.is_quadratic())
    }

    fn output_cdf(&self, theta: &ParamVector, x: &[f64], y: f64) -> Option<f64> {
        delegate!(self, m => m.output_cdf(theta, x, y))
    }

    fn observe(&mut self, theta: &ParamVector, sample: &Sample) {
        delegate!(self, m => m.observe(theta, sample))
    }

    fn mean_gradient(&self, theta: &ParamVector, dataset: &Dataset) -> Result<DVector<f64>> {
        delegate!(self, m => m.mean_gradient(theta, dataset))
    }
}
