use crate::error::{Error, Result};
use crate::models::{Dataset, Model, ParamVector};
use crate::optimizers::{
    averaged_sgd_step, ceil_ratio, tango_step, AveragedSgdState, AveragingNoise, GammaPolicy,
    OptimizerState, PseudoVariant,
};
use crate::rng;

use super::Report;

/// Largest accepted lockstep deviation.
pub const PROP2_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Report {
    pub steps: usize,
    /// `max_k ‖θ_k^TANGO − θ_k^avg‖`.
    pub max_theta_deviation: f64,
    /// `max_k ‖v_k − (θ_{k−1} − θ_k^fast)‖`.
    pub max_velocity_deviation: f64,
    pub passed: bool,
}

impl Prop2Report {
    pub fn to_report(&self) -> Report {
        Report::new("prop2", self.passed)
            .value("steps", self.steps as f64)
            .value("max_theta_deviation", self.max_theta_deviation)
            .value("max_velocity_deviation", self.max_velocity_deviation)
            .value("tolerance", PROP2_TOLERANCE)
    }
}

/// Runs TANGO and averaged SGD with the equivalence noise in lockstep for
/// `⌈T/δt⌉` steps. Both consume identical data indices and pseudo-output
/// streams.
pub fn check_prop2_equivalence<M: Model + ?Sized>(
    model: &M,
    dataset: &Dataset,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    horizon: f64,
    seed: u64,
) -> Result<Prop2Report> {
    if !model.is_quadratic() {
        return Err(Error::UnsupportedModel {
            model: model.name(),
            operation: "the averaged-SGD equivalence check (quadratic loss required)",
        });
    }
    let n = ceil_ratio(horizon, delta_t);
    let policy = GammaPolicy::fixed(gamma);
    let mut data = rng::stream(seed, rng::DATA_STREAM);
    let mut pseudo_tango = rng::stream(seed, rng::PSEUDO_STREAM);
    let mut pseudo_avg = rng::stream(seed, rng::PSEUDO_STREAM);
    let mut tango = OptimizerState::new(theta0.clone());
    let mut avg = AveragedSgdState::new(theta0.clone());
    let mut max_theta = 0.0f64;
    let mut max_v = 0.0f64;
    for k in 1..=n {
        let s = dataset.draw(&mut data);
        tango_step(
            &mut tango,
            model,
            s,
            delta_t,
            delta_t,
            &policy,
            PseudoVariant::Sampled,
            &mut pseudo_tango,
        )
        .map_err(|e| e.at_step(k))?;
        averaged_sgd_step(
            &mut avg,
            model,
            s,
            gamma,
            delta_t,
            delta_t,
            AveragingNoise::Prop2,
            &mut pseudo_avg,
        )
        .map_err(|e| e.at_step(k))?;
        max_theta = max_theta.max((&tango.theta - &avg.theta).norm());
        max_v = max_v.max((&tango.v - avg.velocity()).norm());
    }
    Ok(Prop2Report {
        steps: n,
        max_theta_deviation: max_theta,
        max_velocity_deviation: max_v,
        passed: max_theta <= PROP2_TOLERANCE && max_v <= PROP2_TOLERANCE,
    })
}
