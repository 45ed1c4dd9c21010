use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::models::{self, Dataset, Model, ParamVector};
use crate::optimizers::{tango_step, GammaPolicy, OptimizerState, PseudoVariant};
use crate::rng;

use super::Report;

/// Largest accepted relative error of the time-averaged velocity.
pub const FIXED_POINT_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub steps: usize,
    /// Mean of `v_k` over the last half of the run.
    pub time_average: DVector<f64>,
    /// `J(θ)⁻¹ E g(θ)`.
    pub target: DVector<f64>,
    pub rel_error: f64,
    pub passed: bool,
}

impl FixedPointReport {
    pub fn to_report(&self) -> Report {
        Report::new("fixed-point", self.passed)
            .value("steps", self.steps as f64)
            .value("rel_error", self.rel_error)
            .value("tolerance", FIXED_POINT_TOLERANCE)
    }
}

/// TANGO with `δt = 0` at a frozen `θ`: the time-averaged velocity against
/// the natural-gradient direction.
pub fn check_frozen_fixed_point<M: Model + ?Sized>(
    model: &M,
    dataset: &Dataset,
    theta: &ParamVector,
    gamma: &GammaPolicy,
    n_steps: usize,
    seed: u64,
) -> Result<FixedPointReport> {
    if n_steps < 2 {
        return Err(Error::InvalidParameter(
            "fixed-point check needs at least two steps".into(),
        ));
    }
    let fisher = model.exact_fisher(theta, dataset)?;
    let target = fisher.solve(&models::expected_gradient(model, theta, dataset)?)?;

    let mut data = rng::stream(seed, rng::DATA_STREAM);
    let mut pseudo = rng::stream(seed, rng::PSEUDO_STREAM);
    let mut state = OptimizerState::new(theta.clone());
    let burn_in = n_steps - n_steps / 2;
    let mut acc = DVector::zeros(theta.len());
    for k in 1..=n_steps {
        let s = dataset.draw(&mut data);
        tango_step(
            &mut state,
            model,
            s,
            0.0,
            0.0,
            gamma,
            PseudoVariant::Sampled,
            &mut pseudo,
        )
        .map_err(|e| e.at_step(k))?;
        if k > burn_in {
            acc += &state.v;
        }
    }
    let time_average = acc / (n_steps - burn_in) as f64;
    let scale = target.norm();
    if scale == 0.0 {
        return Err(Error::Precondition(
            "expected gradient vanishes at the frozen point".into(),
        ));
    }
    let rel_error = (&time_average - &target).norm() / scale;
    Ok(FixedPointReport {
        steps: n_steps,
        time_average,
        target,
        rel_error,
        passed: rel_error <= FIXED_POINT_TOLERANCE,
    })
}
