use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{Dataset, FisherMatrix, Model, ParamVector};
use crate::error::{Error, Result};

/// Multiclass logistic regression with class 0 as the reference class.
///
/// Class `c ≥ 1` has logit `w_cᵀx` with `w_c = θ[(c−1)p .. c·p]`; class 0 has
/// logit 0. Fixing the reference class keeps the Fisher matrix nonsingular.
/// Outputs are class indices stored as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    classes: usize,
    input_dim: usize,
}

impl SoftmaxRegression {
    pub fn new(classes: usize, input_dim: usize) -> Result<Self> {
        if classes < 2 || input_dim == 0 {
            return Err(Error::InvalidParameter(alloc::format!(
                "softmax regression needs >= 2 classes and >= 1 input, got {classes} and {input_dim}"
            )));
        }
        Ok(Self { classes, input_dim })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Class probabilities `p_0 .. p_{K−1}` at input `x`.
    pub fn probabilities(&self, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        self.check_params(theta)?;
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let p = self.input_dim;
        let mut logits = Vec::with_capacity(self.classes);
        logits.push(0.0);
        for c in 1..self.classes {
            let w = &theta.as_slice()[(c - 1) * p..c * p];
            logits.push(w.iter().zip(x).map(|(a, b)| a * b).sum());
        }
        let top = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut total = 0.0;
        for z in logits.iter_mut() {
            *z = libm::exp(*z - top);
            total += *z;
        }
        for z in logits.iter_mut() {
            *z /= total;
        }
        Ok(logits)
    }

    fn class_of(&self, y: f64) -> Result<usize> {
        let c = y as usize;
        if y < 0.0 || y.fract() != 0.0 || c >= self.classes {
            return Err(Error::InvalidParameter(alloc::format!(
                "label {y} is not a class index below {}",
                self.classes
            )));
        }
        Ok(c)
    }
}

impl Model for SoftmaxRegression {
    fn name(&self) -> &'static str {
        "softmax_regression"
    }

    fn param_dim(&self) -> usize {
        (self.classes - 1) * self.input_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<f64> {
        let probs = self.probabilities(theta, x)?;
        Ok(-libm::log(probs[self.class_of(y)?]))
    }

    fn grad_log_loss(&self, theta: &ParamVector, x: &[f64], y: f64) -> Result<DVector<f64>> {
        let probs = self.probabilities(theta, x)?;
        let label = self.class_of(y)?;
        let p = self.input_dim;
        let mut g = DVector::zeros(self.param_dim());
        for c in 1..self.classes {
            let coef = probs[c] - if c == label { 1.0 } else { 0.0 };
            for i in 0..p {
                g[(c - 1) * p + i] = coef * x[i];
            }
        }
        Ok(g)
    }

    fn sample_output(&self, theta: &ParamVector, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let probs = self.probabilities(theta, x)?;
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (c, pc) in probs.iter().enumerate() {
            cum += pc;
            if u < cum {
                return Ok(c as f64);
            }
        }
        Ok((self.classes - 1) as f64)
    }

    fn exact_fisher(&self, theta: &ParamVector, dataset: &Dataset) -> Result<FisherMatrix> {
        let d = self.param_dim();
        let p = self.input_dim;
        let mut acc = DMatrix::zeros(d, d);
        for s in dataset.samples() {
            let probs = self.probabilities(theta, &s.x)?;
            for c in 1..self.classes {
                for e in 1..self.classes {
                    let w = if c == e { probs[c] } else { 0.0 } - probs[c] * probs[e];
                    for i in 0..p {
                        for j in 0..p {
                            acc[((c - 1) * p + i, (e - 1) * p + j)] += w * s.x[i] * s.x[j];
                        }
                    }
                }
            }
        }
        FisherMatrix::new(crate::linalg::symmetrize(&(acc / dataset.len() as f64)))
    }
}
