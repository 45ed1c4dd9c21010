use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::{
    averaged_sgd_step, natural_gradient_step, sgd_step, tango_update, AveragedSgdState,
    AveragingNoise, FisherSource, GammaPolicy, OptimizerState, PreconditionerSpec, PseudoVariant,
    StepSchedule,
};
use crate::error::{Error, Result};
use crate::models::{Dataset, Model, ParamVector, Sample};
use crate::rng;

/// Number of most recent sample losses averaged into the `loss` column.
pub const LOSS_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "id", rename_all = "snake_case"))]
pub enum OptimizerSpec {
    Tango {
        gamma: GammaPolicy,
        #[cfg_attr(feature = "serde", serde(default))]
        variant: PseudoVariant,
        #[cfg_attr(feature = "serde", serde(default = "one"))]
        batch_size: usize,
        #[cfg_attr(feature = "serde", serde(default))]
        preconditioner: PreconditionerSpec,
    },
    Sgd {
        lr: f64,
    },
    AveragedSgd {
        gamma: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        noise: AveragingNoise,
    },
    NaturalGradient {
        #[cfg_attr(feature = "serde", serde(default))]
        fisher: FisherSource,
    },
}

#[cfg(feature = "serde")]
fn one() -> usize {
    1
}

impl OptimizerSpec {
    pub fn tango(gamma: GammaPolicy) -> Self {
        OptimizerSpec::Tango {
            gamma,
            variant: PseudoVariant::Sampled,
            batch_size: 1,
            preconditioner: PreconditionerSpec::Identity,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Tango { .. } => "tango",
            OptimizerSpec::Sgd { .. } => "sgd",
            OptimizerSpec::AveragedSgd { .. } => "averaged_sgd",
            OptimizerSpec::NaturalGradient { .. } => "natural_gradient",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optimizer: OptimizerSpec,
    pub schedule: StepSchedule,
    /// Total time `T`; the run lasts `⌈T/δt⌉` steps.
    pub horizon: f64,
    pub record_every: usize,
    pub seed: u64,
    /// Diagnostic mode: updates use `δt = 0`, so θ stays put while `v` evolves.
    pub freeze_theta: bool,
}

impl RunConfig {
    pub fn new(optimizer: OptimizerSpec, delta_t: f64, horizon: f64, seed: u64) -> Self {
        Self {
            optimizer,
            schedule: StepSchedule::constant(delta_t),
            horizon,
            record_every: 1,
            seed,
            freeze_theta: false,
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRow {
    pub step: usize,
    pub t: f64,
    pub theta: Vec<f64>,
    pub v_norm: f64,
    /// Mean log-loss of the last [`LOSS_WINDOW`] sampled data points.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRecord {
    pub param_dim: usize,
    pub steps: usize,
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }

    pub fn final_theta(&self) -> Option<ParamVector> {
        self.last()
            .map(|r| ParamVector::from_column_slice(&r.theta))
    }
}

enum Runner {
    Tango {
        state: OptimizerState,
        gamma: GammaPolicy,
        variant: PseudoVariant,
        batch_size: usize,
        preconditioner: super::Preconditioner,
    },
    Sgd {
        state: OptimizerState,
        lr: f64,
    },
    Averaged {
        state: AveragedSgdState,
        gamma: f64,
        noise: AveragingNoise,
    },
    Natural {
        state: OptimizerState,
        fisher: FisherSource,
    },
}

impl Runner {
    fn new(spec: &OptimizerSpec, theta0: ParamVector) -> Result<Self> {
        Ok(match spec {
            OptimizerSpec::Tango {
                gamma,
                variant,
                batch_size,
                preconditioner,
            } => {
                gamma.validate()?;
                if *batch_size == 0 {
                    return Err(Error::InvalidParameter(
                        "batch_size must be at least 1".into(),
                    ));
                }
                Runner::Tango {
                    preconditioner: preconditioner.build(theta0.len())?,
                    state: OptimizerState::new(theta0),
                    gamma: *gamma,
                    variant: *variant,
                    batch_size: *batch_size,
                }
            }
            OptimizerSpec::Sgd { lr } => Runner::Sgd {
                state: OptimizerState::new(theta0),
                lr: *lr,
            },
            OptimizerSpec::AveragedSgd { gamma, noise } => Runner::Averaged {
                state: AveragedSgdState::new(theta0),
                gamma: *gamma,
                noise: *noise,
            },
            OptimizerSpec::NaturalGradient { fisher } => Runner::Natural {
                state: OptimizerState::new(theta0),
                fisher: *fisher,
            },
        })
    }

    fn batch_size(&self) -> usize {
        match self {
            Runner::Tango { batch_size, .. } => *batch_size,
            _ => 1,
        }
    }

    fn theta(&self) -> &ParamVector {
        match self {
            Runner::Tango { state, .. }
            | Runner::Sgd { state, .. }
            | Runner::Natural { state, .. } => &state.theta,
            Runner::Averaged { state, .. } => &state.theta,
        }
    }

    fn v_norm(&self) -> f64 {
        match self {
            Runner::Tango { state, .. } | Runner::Natural { state, .. } => state.v.norm(),
            Runner::Sgd { .. } => 0.0,
            Runner::Averaged { state, .. } => state.velocity().norm(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step<M: Model + ?Sized>(
        &mut self,
        model: &M,
        dataset: &Dataset,
        batch: &[&Sample],
        dt_prev: f64,
        dt: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<()> {
        match self {
            Runner::Tango {
                state,
                gamma,
                variant,
                preconditioner,
                ..
            } => tango_update(
                state,
                model,
                batch,
                dt_prev,
                dt,
                gamma,
                *variant,
                Some(preconditioner),
                rng,
            )
            .map(|_| ()),
            Runner::Sgd { state, lr } => {
                if dt == 0.0 {
                    state.k += 1;
                    Ok(())
                } else {
                    sgd_step(state, model, batch[0], *lr)
                }
            }
            Runner::Averaged {
                state,
                gamma,
                noise,
            } => averaged_sgd_step(state, model, batch[0], *gamma, dt_prev, dt, *noise, rng),
            Runner::Natural { state, fisher } => {
                natural_gradient_step(state, model, batch[0], dt, *fisher, dataset, rng)
            }
        }
    }
}

/// Runs an optimizer for `⌈T/δt⌉` steps with seeded uniform sampling.
///
/// Data indices come from the data stream of `config.seed` and pseudo-outputs
/// from the pseudo stream, so two optimizers run with the same seed visit
/// the same data samples in the same order. Rows are kept every
/// `record_every` steps and at the final step.
pub fn run<M: Model + Clone>(
    config: &RunConfig,
    model: &M,
    dataset: &Dataset,
    theta0: &ParamVector,
) -> Result<TrajectoryRecord> {
    model.check_params(theta0)?;
    if config.record_every == 0 {
        return Err(Error::InvalidParameter(
            "record_every must be at least 1".into(),
        ));
    }
    let steps = config.schedule.steps_for(config.horizon)?;
    let mut model = model.clone();
    let mut runner = Runner::new(&config.optimizer, theta0.clone())?;
    let mut data_rng = rng::stream(config.seed, rng::DATA_STREAM);
    let mut pseudo_rng = rng::stream(config.seed, rng::PSEUDO_STREAM);
    let mut losses: VecDeque<f64> = VecDeque::with_capacity(LOSS_WINDOW);
    let mut rows = Vec::new();
    let batch_size = runner.batch_size();

    for k in 1..=steps {
        let (dt_prev, dt) = if config.freeze_theta {
            (0.0, 0.0)
        } else {
            (config.schedule.delta_t(k - 1), config.schedule.delta_t(k))
        };
        let batch: Vec<&Sample> = (0..batch_size)
            .map(|_| dataset.draw(&mut data_rng))
            .collect();
        for s in &batch {
            let l = model
                .log_loss(runner.theta(), &s.x, s.y)
                .map_err(|e| e.at_step(k))?;
            if losses.len() == LOSS_WINDOW {
                losses.pop_front();
            }
            losses.push_back(l);
            model.observe(runner.theta(), s);
        }
        runner
            .step(&model, dataset, &batch, dt_prev, dt, &mut pseudo_rng)
            .map_err(|e| e.at_step(k))?;

        if k % config.record_every == 0 || k == steps {
            rows.push(TrajectoryRow {
                step: k,
                t: if config.freeze_theta {
                    0.0
                } else {
                    config.schedule.time(k)
                },
                theta: runner.theta().iter().copied().collect(),
                v_norm: runner.v_norm(),
                loss: losses.iter().sum::<f64>() / losses.len() as f64,
            });
        }
    }
    Ok(TrajectoryRecord {
        param_dim: theta0.len(),
        steps,
        rows,
    })
}
