//! Seeded generators for the built-in synthetic datasets.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Model, ParamVector, Sample, SoftmaxRegression};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum DatasetGenerator {
    /// `y ~ N(mean, std²)`, no inputs.
    Gaussian { mean: f64, std: f64 },
    /// `x = (1, z_1, …)` when `intercept`, else `x = z`, with `z` standard
    /// normal; `y = θ*ᵀx + noise_std·ε`.
    Linear {
        theta: Vec<f64>,
        noise_std: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        intercept: bool,
    },
    /// `x = (1, z_1, …, z_{p−1})`, labels drawn from a softmax model with
    /// the given weights.
    Softmax {
        classes: usize,
        input_dim: usize,
        weights: Vec<f64>,
    },
}

impl DatasetGenerator {
    pub fn generate(&self, size: usize, seed: u64) -> Result<Dataset> {
        if size == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut r = rng::stream(seed, rng::AUX_STREAM);
        let samples: Vec<Sample> = match self {
            DatasetGenerator::Gaussian { mean, std } => {
                if !(*std >= 0.0) {
                    return Err(Error::InvalidParameter(
                        "gaussian std must be non-negative".into(),
                    ));
                }
                (0..size)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        Sample::output(mean + std * z)
                    })
                    .collect()
            }
            DatasetGenerator::Linear {
                theta,
                noise_std,
                intercept,
            } => {
                if theta.is_empty() {
                    return Err(Error::InvalidParameter(
                        "linear generator needs a parameter".into(),
                    ));
                }
                (0..size)
                    .map(|_| {
                        let x: Vec<f64> = (0..theta.len())
                            .map(|i| {
                                if *intercept && i == 0 {
                                    1.0
                                } else {
                                    StandardNormal.sample(&mut r)
                                }
                            })
                            .collect();
                        let eps: f64 = StandardNormal.sample(&mut r);
                        let y =
                            theta.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + noise_std * eps;
                        Sample::new(x, y)
                    })
                    .collect()
            }
            DatasetGenerator::Softmax {
                classes,
                input_dim,
                weights,
            } => {
                let model = SoftmaxRegression::new(*classes, *input_dim)?;
                let w = ParamVector::from_column_slice(weights);
                model.check_params(&w)?;
                let mut out = Vec::with_capacity(size);
                for _ in 0..size {
                    let x: Vec<f64> = (0..*input_dim)
                        .map(|i| {
                            if i == 0 {
                                1.0
                            } else {
                                r.sample(StandardNormal)
                            }
                        })
                        .collect();
                    let y = model.sample_output(&w, &x, &mut r)?;
                    out.push(Sample::new(x, y));
                }
                out
            }
        };
        Dataset::new(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        let g = DatasetGenerator::Gaussian {
            mean: 10.0,
            std: 1.0,
        };
        assert_eq!(g.generate(50, 7).unwrap(), g.generate(50, 7).unwrap());
        assert_ne!(g.generate(50, 7).unwrap(), g.generate(50, 8).unwrap());
    }

    #[test]
    fn linear_generator_shapes() {
        let g = DatasetGenerator::Linear {
            theta: vec![1.0, -2.0],
            noise_std: 0.0,
            intercept: true,
        };
        let ds = g.generate(10, 1).unwrap();
        assert_eq!(ds.input_dim(), 2);
        for s in ds.samples() {
            assert_eq!(s.x[0], 1.0);
            assert!((s.y - (1.0 - 2.0 * s.x[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_generator_labels_in_range() {
        let g = DatasetGenerator::Softmax {
            classes: 3,
            input_dim: 2,
            weights: vec![0.5, 1.0, -0.5, -1.0],
        };
        let ds = g.generate(200, 3).unwrap();
        assert!(ds
            .samples()
            .iter()
            .all(|s| s.y >= 0.0 && s.y < 3.0 && s.y.fract() == 0.0));
    }

    #[test]
    fn zero_size_is_empty_error() {
        let g = DatasetGenerator::Gaussian {
            mean: 0.0,
            std: 1.0,
        };
        assert_eq!(g.generate(0, 1), Err(Error::EmptyDataset));
    }
}
