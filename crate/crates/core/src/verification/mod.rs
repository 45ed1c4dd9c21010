//! Executable checks of the algorithm's structural results.
//!
//! Every check is deterministic given its seed. Monte-Carlo checks compare
//! against their bound times [`mc_threshold`].

mod fixed_point;
mod lemmas;
mod noise;
mod prop2;
mod rate;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use fixed_point::{check_frozen_fixed_point, FixedPointReport, FIXED_POINT_TOLERANCE};
pub use lemmas::{
    check_lemma11_bmatrix, check_lemma6, check_lemma7_bound, check_lemma7_bound_unchecked,
    check_martingale_variances, lemma11_study, tango_metric_sequence, Lemma11Report, Lemma11Study,
    Lemma6Report, Lemma7Report, MartingaleReport, LEMMA11_IDENTITY_TOLERANCE, LEMMA11_MIN_SLOPE,
};
pub use noise::{
    estimate_constants, pilot_checkpoints, DirectionalProbe, FisherNoise, IdentityNoise,
    NoiseConstants, NoiseDraw, NoiseSpec, TangoNoise, R2_DRAWS,
};
pub use prop2::{check_prop2_equivalence, Prop2Report, PROP2_TOLERANCE};
pub use rate::{
    prop4_rate_study, tango_rate_study, RateCell, RateStudyResult, PROP4_SLOPE, TANGO_SLOPE,
};

/// Relative slack on Monte-Carlo estimates of matrix inequalities.
pub const MC_TOLERANCE: f64 = 0.05;

/// `1 + 3/√n`: pass factor for an `n`-seed Monte-Carlo estimate.
pub fn mc_threshold(n_seeds: usize) -> f64 {
    1.0 + 3.0 / libm::sqrt(n_seeds as f64)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            what: "slope fit",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter(
            "slope fit needs at least two points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(
            "slope fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| libm::log(*x)).collect();
    let ly: Vec<f64> = ys.iter().map(|y| libm::log(*y)).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "slope fit needs distinct abscissae".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// Key-value summary of a check, the common currency of the report files.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Report {
    pub check: String,
    pub passed: bool,
    pub values: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(check: &str, passed: bool) -> Self {
        Self {
            check: check.to_string(),
            passed,
            values: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn value(mut self, key: &str, value: f64) -> Self {
        self.values.push((key.to_string(), value));
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[cfg(test)]
mod tests;
