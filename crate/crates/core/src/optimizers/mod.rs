//! TANGO and the baselines it is compared against.
//!
//! All step functions share the same sampling discipline: the caller picks
//! the data sample(s), and `rng` is consumed only for pseudo-outputs, one
//! draw per data sample, in order.

mod gamma;
mod precond;
mod run;

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{Dataset, Model, ParamVector, Sample};

pub use gamma::{select_gamma, GammaPolicy, GammaStats, DEFAULT_KAPPA};
pub use precond::{Preconditioner, PreconditionerSpec, RMSPROP_DECAY};
pub use run::{run, OptimizerSpec, RunConfig, TrajectoryRecord, TrajectoryRow, LOSS_WINDOW};

/// How the pseudo-output `ỹ` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PseudoVariant {
    /// `ỹ ~ p_θ(·|x)`.
    #[default]
    Sampled,
    /// `ỹ = y`.
    OuterProduct,
}

/// State of a TANGO-family run. `v` is zero at `k = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub theta: ParamVector,
    pub v: DVector<f64>,
    pub k: usize,
    pub gamma_stats: GammaStats,
}

impl OptimizerState {
    pub fn new(theta: ParamVector) -> Self {
        let d = theta.len();
        Self {
            theta,
            v: DVector::zeros(d),
            k: 0,
            gamma_stats: GammaStats::default(),
        }
    }
}

/// Diagnostics of a single TANGO step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub gamma: f64,
    /// Effective squared pseudo-gradient norm fed to the γ statistics.
    pub effective_sq_norm: f64,
}

/// Learning-rate schedule `δt_k`, `k ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum StepSchedule {
    Constant { delta_t: f64 },
    Sequence { values: Vec<f64> },
}

impl StepSchedule {
    pub fn constant(delta_t: f64) -> Self {
        StepSchedule::Constant { delta_t }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |d: f64| d > 0.0 && d <= 1.0;
        match self {
            StepSchedule::Constant { delta_t } if !ok(*delta_t) => Err(Error::InvalidSchedule(
                format!("delta_t must lie in (0, 1], got {delta_t}"),
            )),
            StepSchedule::Sequence { values } if values.is_empty() => {
                Err(Error::InvalidSchedule("empty sequence".into()))
            }
            StepSchedule::Sequence { values } => match values.iter().position(|d| !ok(*d)) {
                Some(i) => Err(Error::InvalidSchedule(format!(
                    "delta_t[{}] = {} outside (0, 1]",
                    i + 1,
                    values[i]
                ))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// `δt_k` for `k ≥ 1`; `δt_0` is defined as `δt_1`.
    pub fn delta_t(&self, k: usize) -> f64 {
        let k = k.max(1);
        match self {
            StepSchedule::Constant { delta_t } => *delta_t,
            StepSchedule::Sequence { values } => values[(k - 1).min(values.len() - 1)],
        }
    }

    /// Elapsed time after `k` steps.
    pub fn time(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Constant { delta_t } => k as f64 * delta_t,
            StepSchedule::Sequence { values } => values[..k.min(values.len())].iter().sum(),
        }
    }

    /// Number of steps needed to reach time `horizon`: `⌈T/δt⌉` for a
    /// constant schedule.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        self.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        match self {
            StepSchedule::Constant { delta_t } => Ok(ceil_ratio(horizon, *delta_t)),
            StepSchedule::Sequence { values } => {
                let target = horizon * (1.0 - 1e-12);
                let mut t = 0.0;
                for (i, d) in values.iter().enumerate() {
                    t += d;
                    if t >= target {
                        return Ok(i + 1);
                    }
                }
                Err(Error::InvalidSchedule(format!(
                    "sequence reaches t = {t} only, short of horizon {horizon}"
                )))
            }
        }
    }
}

/// `⌈a/b⌉`, treating ratios within 1e-9 of an integer as that integer.
pub fn ceil_ratio(a: f64, b: f64) -> usize {
    let r = a / b;
    let nearest = libm::round(r);
    let n = if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        libm::ceil(r)
    };
    (n as usize).max(1)
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(format!(
            "{name} = {value} outside [0, 1]"
        )))
    }
}

/// Velocity update shared by every TANGO variant:
///
/// `v_k = (1−δt_{k−1}) v_{k−1} + γ C g − γ B (1−δt_{k−1}) (v_{k−1}ᵀ g̃) C g̃`.
///
/// `c_g` and `c_g_tilde` are `C g` and `C g̃`; pass `g` and `g̃` themselves for
/// the unpreconditioned update.
pub fn tango_velocity(
    v_prev: &DVector<f64>,
    c_g: &DVector<f64>,
    g_tilde: &DVector<f64>,
    c_g_tilde: &DVector<f64>,
    dt_prev: f64,
    gamma: f64,
    batch: usize,
) -> DVector<f64> {
    let decay = 1.0 - dt_prev;
    let coef = gamma * batch as f64 * decay * v_prev.dot(g_tilde);
    DVector::from_fn(v_prev.len(), |i, _| {
        decay * v_prev[i] + gamma * c_g[i] - coef * c_g_tilde[i]
    })
}

fn mean_of(mut vectors: Vec<DVector<f64>>) -> DVector<f64> {
    let n = vectors.len();
    let mut acc = vectors.swap_remove(0);
    for v in &vectors {
        acc += v;
    }
    if n > 1 {
        acc /= n as f64;
    }
    acc
}

/// Shared implementation of the plain, minibatch and preconditioned steps.
#[allow(clippy::too_many_arguments)]
fn tango_update<M: Model + ?Sized>(
    state: &mut OptimizerState,
    model: &M,
    batch: &[&Sample],
    dt_prev: f64,
    dt: f64,
    gamma: &GammaPolicy,
    variant: PseudoVariant,
    preconditioner: Option<&mut Preconditioner>,
    rng: &mut dyn RngCore,
) -> Result<StepInfo> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter(
            "minibatch must contain at least one sample".into(),
        ));
    }
    check_rate("delta_t_prev", dt_prev)?;
    check_rate("delta_t", dt)?;
    let step = state.k + 1;

    let mut grads = Vec::with_capacity(batch.len());
    let mut pseudo = Vec::with_capacity(batch.len());
    for s in batch {
        grads.push(model.grad_log_loss(&state.theta, &s.x, s.y)?);
        let y_tilde = match variant {
            PseudoVariant::Sampled => model.sample_output(&state.theta, &s.x, rng)?,
            PseudoVariant::OuterProduct => s.y,
        };
        pseudo.push(model.grad_log_loss(&state.theta, &s.x, y_tilde)?);
    }
    let g = mean_of(grads);
    let g_tilde = mean_of(pseudo);
    let b = batch.len();

    let (c_g, c_g_tilde) = match preconditioner {
        Some(c) if !c.is_identity() => {
            c.observe(&g_tilde);
            (c.apply(&g), c.apply(&g_tilde))
        }
        _ => (g.clone(), g_tilde.clone()),
    };

    // Stability of the v-update is governed by γ·B·g̃ᵀCg̃.
    let effective_sq_norm = b as f64 * g_tilde.dot(&c_g_tilde);
    let mut stats = state.gamma_stats.clone();
    stats.record(effective_sq_norm);
    let gamma = select_gamma(gamma, &stats)?;

    let v = tango_velocity(&state.v, &c_g, &g_tilde, &c_g_tilde, dt_prev, gamma, b);
    let theta = DVector::from_fn(v.len(), |i, _| state.theta[i] - dt * v[i]);
    if !linalg::all_finite(&v) || !linalg::all_finite(&theta) {
        return Err(Error::Diverged { step });
    }
    state.v = v;
    state.theta = theta;
    state.k = step;
    state.gamma_stats = stats;
    Ok(StepInfo {
        gamma,
        effective_sq_norm,
    })
}

/// One TANGO step on a single sample.
#[allow(clippy::too_many_arguments)]
pub fn tango_step<M: Model + ?Sized>(
    state: &mut OptimizerState,
    model: &M,
    sample: &Sample,
    dt_prev: f64,
    dt: f64,
    gamma: &GammaPolicy,
    variant: PseudoVariant,
    rng: &mut dyn RngCore,
) -> Result<StepInfo> {
    tango_update(
        state,
        model,
        &[sample],
        dt_prev,
        dt,
        gamma,
        variant,
        None,
        rng,
    )
}

/// TANGO on a minibatch: `g` and `g̃` are batch averages and the
/// `g̃g̃ᵀ` term is rescaled by the batch size.
#[allow(clippy::too_many_arguments)]
pub fn tango_minibatch_step<M: Model + ?Sized>(
    state: &mut OptimizerState,
    model: &M,
    batch: &[&Sample],
    dt_prev: f64,
    dt: f64,
    gamma: &GammaPolicy,
    variant: PseudoVariant,
    rng: &mut dyn RngCore,
) -> Result<StepInfo> {
    tango_update(state, model, batch, dt_prev, dt, gamma, variant, None, rng)
}

/// TANGO preconditioned by an SPD operator `C`.
#[allow(clippy::too_many_arguments)]
pub fn preconditioned_tango_step<M: Model + ?Sized>(
    state: &mut OptimizerState,
    model: &M,
    sample: &Sample,
    dt_prev: f64,
    dt: f64,
    gamma: &GammaPolicy,
    variant: PseudoVariant,
    preconditioner: &mut Preconditioner,
    rng: &mut dyn RngCore,
) -> Result<StepInfo> {
    tango_update(
        state,
        model,
        &[sample],
        dt_prev,
        dt,
        gamma,
        variant,
        Some(preconditioner),
        rng,
    )
}

/// Plain SGD, `θ ← θ − lr·g`.
pub fn sgd_step<M: Model + ?Sized>(
    state: &mut OptimizerState,
    model: &M,
    sample: &Sample,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let g = model.grad_log_loss(&state.theta, &sample.x, sample.y)?;
    let theta = DVector::from_fn(g.len(), |i, _| state.theta[i] - lr * g[i]);
    if !linalg::all_finite(&theta) {
        return Err(Error::Diverged { step: state.k + 1 });
    }
    state.theta = theta;
    state.k += 1;
    Ok(())
}

/// Extra noise injected into the fast iterate of averaged SGD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AveragingNoise {
    #[default]
    None,
    /// `ξ_k = (1−δt_{k−1})(g̃ g̃ᵀ − H_k) v_{k−1}`, which makes averaged SGD
    /// coincide with TANGO on quadratic models.
    Prop2,
}

/// Fast iterate, its moving average, and the previous average.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedSgdState {
    pub theta_fast: ParamVector,
    pub theta: ParamVector,
    /// `θ_{k−1}`; equal to `θ_0` at `k = 0`.
    pub theta_prev: ParamVector,
    pub k: usize,
}

impl AveragedSgdState {
    /// `θ_0^fast = θ_0`, which is what `v_0 = 0` forces.
    pub fn new(theta: ParamVector) -> Self {
        Self {
            theta_fast: theta.clone(),
            theta_prev: theta.clone(),
            theta,
            k: 0,
        }
    }

    /// `v_k = θ_{k−1} − θ_k^fast`.
    pub fn velocity(&self) -> DVector<f64> {
        &self.theta_prev - &self.theta_fast
    }
}

/// Averaged SGD: `θ^fast ← θ^fast − γ g(θ^fast) + γ ξ`,
/// `θ ← (1−δt) θ + δt θ^fast`.
#[allow(clippy::too_many_arguments)]
pub fn averaged_sgd_step<M: Model + ?Sized>(
    state: &mut AveragedSgdState,
    model: &M,
    sample: &Sample,
    gamma: f64,
    dt_prev: f64,
    dt: f64,
    noise: AveragingNoise,
    rng: &mut dyn RngCore,
) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    check_rate("delta_t_prev", dt_prev)?;
    check_rate("delta_t", dt)?;
    let step = state.k + 1;
    let g_fast = model.grad_log_loss(&state.theta_fast, &sample.x, sample.y)?;
    let mut theta_fast = &state.theta_fast - g_fast * gamma;
    if noise == AveragingNoise::Prop2 {
        if !model.is_quadratic() {
            return Err(Error::UnsupportedModel {
                model: model.name(),
                operation: "averaged SGD with the equivalence noise (quadratic loss required)",
            });
        }
        // v_{k−1} = θ_{k−2} − θ_{k−1}^fast.
        let v_prev = &state.theta_prev - &state.theta_fast;
        let xi = prop2_noise(model, &state.theta, sample, &v_prev, dt_prev, rng)?;
        theta_fast += xi * gamma;
    }
    let theta = &state.theta * (1.0 - dt) + &theta_fast * dt;
    if !linalg::all_finite(&theta) || !linalg::all_finite(&theta_fast) {
        return Err(Error::Diverged { step });
    }
    state.theta_prev = core::mem::replace(&mut state.theta, theta);
    state.theta_fast = theta_fast;
    state.k = step;
    Ok(())
}

/// `ξ = (1−δt_{k−1})(g̃ g̃ᵀ − H) v_{k−1}` with `g̃` and `H` evaluated at the
/// slow parameter `theta`. Draws one pseudo-output from `rng`.
pub fn prop2_noise<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    sample: &Sample,
    v_prev: &DVector<f64>,
    dt_prev: f64,
    rng: &mut dyn RngCore,
) -> Result<DVector<f64>> {
    let y_tilde = model.sample_output(theta, &sample.x, rng)?;
    let g_tilde = model.grad_log_loss(theta, &sample.x, y_tilde)?;
    let h = model.hessian(theta, &sample.x, sample.y)?;
    Ok((&g_tilde * g_tilde.dot(v_prev) - h * v_prev) * (1.0 - dt_prev))
}

/// Where the natural-gradient step gets its Fisher matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "source", rename_all = "snake_case"))]
pub enum FisherSource {
    #[default]
    Exact,
    MonteCarlo {
        samples: usize,
    },
}

/// Stochastic natural gradient, `θ ← θ − δt J(θ)⁻¹ g`. The direction
/// `J⁻¹g` is stored in `state.v`.
pub fn natural_gradient_step<M: Model + ?Sized>(
    state: &mut OptimizerState,
    model: &M,
    sample: &Sample,
    dt: f64,
    fisher: FisherSource,
    dataset: &Dataset,
    rng: &mut dyn RngCore,
) -> Result<()> {
    check_rate("delta_t", dt)?;
    let g = model.grad_log_loss(&state.theta, &sample.x, sample.y)?;
    let j = match fisher {
        FisherSource::Exact => model.exact_fisher(&state.theta, dataset)?,
        FisherSource::MonteCarlo { samples } => {
            crate::models::mc_fisher(model, &state.theta, dataset, samples, rng)?
        }
    };
    let direction = j.solve(&g)?;
    let theta = &state.theta - &direction * dt;
    if !linalg::all_finite(&theta) {
        return Err(Error::Diverged { step: state.k + 1 });
    }
    state.theta = theta;
    state.v = direction;
    state.k += 1;
    Ok(())
}

#[cfg(test)]
mod tests;
