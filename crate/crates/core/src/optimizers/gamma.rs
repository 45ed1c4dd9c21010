use crate::error::{Error, Result};

/// Running statistics of the squared norm of the (effective) pseudo-gradient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GammaStats {
    count: u64,
    max_sq: f64,
    sum_sq: f64,
    sum_fourth: f64,
}

impl GammaStats {
    pub fn record(&mut self, sq_norm: f64) {
        self.count += 1;
        self.max_sq = self.max_sq.max(sq_norm);
        self.sum_sq += sq_norm;
        self.sum_fourth += sq_norm * sq_norm;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn max_sq(&self) -> f64 {
        self.max_sq
    }

    pub fn mean_sq(&self) -> f64 {
        self.sum_sq / self.count as f64
    }

    pub fn mean_fourth(&self) -> f64 {
        self.sum_fourth / self.count as f64
    }
}

/// Rule for the fast rate `γ` of the velocity update.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "policy", rename_all = "snake_case"))]
pub enum GammaPolicy {
    Fixed {
        value: f64,
    },
    /// `1 / max ‖g̃‖²` over the gradients seen so far.
    MaxNorm,
    /// `1 / (κ · mean ‖g̃‖²)`; `κ = 3` is safe for Gaussian gradients.
    GaussianKurtosis {
        #[cfg_attr(feature = "serde", serde(default = "default_kappa"))]
        kappa: f64,
    },
    /// `mean ‖g̃‖² / mean ‖g̃‖⁴`, a necessary but not sufficient bound.
    MomentRatio,
}

pub const DEFAULT_KAPPA: f64 = 3.0;

#[cfg(feature = "serde")]
fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl GammaPolicy {
    pub fn fixed(value: f64) -> Self {
        GammaPolicy::Fixed { value }
    }

    pub fn gaussian_kurtosis() -> Self {
        GammaPolicy::GaussianKurtosis {
            kappa: DEFAULT_KAPPA,
        }
    }

    pub fn is_data_driven(&self) -> bool {
        !matches!(self, GammaPolicy::Fixed { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GammaPolicy::Fixed { value } if !(value > 0.0 && value.is_finite()) => Err(
                Error::InvalidParameter(format!("gamma must be positive, got {value}")),
            ),
            GammaPolicy::GaussianKurtosis { kappa } if !(kappa > 0.0 && kappa.is_finite()) => Err(
                Error::InvalidParameter(format!("kurtosis bound must be positive, got {kappa}")),
            ),
            _ => Ok(()),
        }
    }
}

pub fn select_gamma(policy: &GammaPolicy, stats: &GammaStats) -> Result<f64> {
    policy.validate()?;
    if let GammaPolicy::Fixed { value } = *policy {
        return Ok(value);
    }
    if stats.is_empty() {
        return Err(Error::EmptyStatistics);
    }
    let gamma = match *policy {
        GammaPolicy::Fixed { value } => value,
        GammaPolicy::MaxNorm => 1.0 / stats.max_sq(),
        GammaPolicy::GaussianKurtosis { kappa } => 1.0 / (kappa * stats.mean_sq()),
        GammaPolicy::MomentRatio => stats.mean_sq() / stats.mean_fourth(),
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma policy produced {gamma}; all pseudo-gradients so far are zero"
        )));
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn stats_of(values: &[f64]) -> GammaStats {
        let mut s = GammaStats::default();
        for v in values {
            s.record(*v);
        }
        s
    }

    #[test]
    fn max_norm_is_reciprocal_of_largest() {
        let s = stats_of(&[1.0, 4.0, 9.0]);
        assert_eq!(select_gamma(&GammaPolicy::MaxNorm, &s).unwrap(), 1.0 / 9.0);
    }

    #[test]
    fn degenerate_distribution_collapses_policies() {
        let s = stats_of(&[2.5; 10]);
        let moment = select_gamma(&GammaPolicy::MomentRatio, &s).unwrap();
        let max = select_gamma(&GammaPolicy::MaxNorm, &s).unwrap();
        assert!((moment - 0.4).abs() < 1e-15);
        assert!((moment - max).abs() < 1e-15);
    }

    #[test]
    fn gaussian_kurtosis_for_standard_normal_gradients() {
        let d = 4;
        let mut r = rng::stream(99, 1);
        let mut s = GammaStats::default();
        for _ in 0..100_000 {
            let sq: f64 = (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    z * z
                })
                .sum();
            s.record(sq);
        }
        let gamma = select_gamma(&GammaPolicy::gaussian_kurtosis(), &s).unwrap();
        let target = 1.0 / (3.0 * d as f64);
        assert!((gamma - target).abs() / target < 0.05);
    }

    #[test]
    fn empty_statistics_error_for_data_driven_policies() {
        let s = GammaStats::default();
        for p in [
            GammaPolicy::MaxNorm,
            GammaPolicy::MomentRatio,
            GammaPolicy::gaussian_kurtosis(),
        ] {
            assert_eq!(select_gamma(&p, &s), Err(Error::EmptyStatistics));
        }
        assert_eq!(select_gamma(&GammaPolicy::fixed(0.1), &s).unwrap(), 0.1);
    }

    #[test]
    fn invalid_fixed_gamma() {
        assert!(select_gamma(&GammaPolicy::fixed(0.0), &GammaStats::default()).is_err());
        assert!(select_gamma(&GammaPolicy::fixed(f64::NAN), &GammaStats::default()).is_err());
    }
}
