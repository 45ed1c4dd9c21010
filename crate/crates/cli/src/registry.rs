//! Built-in experiment configurations, addressable by name.

use tango_core::models::data::DatasetGenerator;
use tango_core::models::NoiseVariance;
use tango_core::optimizers::{
    AveragingNoise, FisherSource, GammaPolicy, OptimizerSpec, PreconditionerSpec, PseudoVariant,
    StepSchedule,
};

use crate::config::{DatasetSpec, ExperimentConfig, ModelSpec, SweepGrid};

pub const FIG1_DATA_MEAN: f64 = 10.0;
pub const FIG1_DATA_SIZE: usize = 1000;
pub const FIG1_DATA_SEED: u64 = 1;

pub const NAMES: &[&str] = &[
    "fig1-tango",
    "fig1-sgd",
    "fig1-averaged-sgd",
    "gaussian-natural-gradient",
    "gaussian-natural-gradient-mc",
    "gaussian-sweep",
    "linear-tango",
    "linear-tango-minibatch",
    "linear-tango-rmsprop",
    "linear-tango-fixed-preconditioner",
    "linear-running-mse",
    "linear-averaged-sgd-prop2",
    "linear-sweep",
    "softmax-tango",
    "softmax-tango-outer-product",
];

fn fig1_dataset() -> DatasetSpec {
    DatasetSpec::Generated {
        size: FIG1_DATA_SIZE,
        seed: FIG1_DATA_SEED,
        generator: DatasetGenerator::Gaussian {
            mean: FIG1_DATA_MEAN,
            std: 1.0,
        },
    }
}

fn linear_dataset() -> DatasetSpec {
    DatasetSpec::Generated {
        size: 1000,
        seed: 2,
        generator: DatasetGenerator::Linear {
            theta: vec![1.0, -2.0],
            noise_std: 0.5,
            intercept: true,
        },
    }
}

fn softmax_dataset() -> DatasetSpec {
    DatasetSpec::Generated {
        size: 1000,
        seed: 3,
        generator: DatasetGenerator::Softmax {
            classes: 2,
            input_dim: 2,
            weights: vec![0.5, -1.5],
        },
    }
}

fn base(
    name: &str,
    model: ModelSpec,
    dataset: DatasetSpec,
    optimizer: OptimizerSpec,
    dt: f64,
    horizon: f64,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        seed: 1,
        horizon,
        record_every: 100,
        theta0: None,
        freeze_theta: false,
        output: None,
        model,
        dataset,
        optimizer,
        schedule: StepSchedule::constant(dt),
        sweep: None,
    }
}

fn tango(
    gamma: GammaPolicy,
    batch_size: usize,
    variant: PseudoVariant,
    preconditioner: PreconditionerSpec,
) -> OptimizerSpec {
    OptimizerSpec::Tango {
        gamma,
        variant,
        batch_size,
        preconditioner,
    }
}

fn linear(noise: NoiseVariance) -> ModelSpec {
    ModelSpec::Linear {
        input_dim: 2,
        noise,
    }
}

pub fn builtin(name: &str) -> Option<ExperimentConfig> {
    let matched = NoiseVariance::Fixed { sigma2: 0.25 };
    let softmax = ModelSpec::Softmax {
        classes: 2,
        input_dim: 2,
    };
    let plain = |g| tango(g, 1, PseudoVariant::Sampled, PreconditionerSpec::Identity);
    let cfg = match name {
        "fig1-tango" => base(
            name,
            ModelSpec::Gaussian,
            fig1_dataset(),
            plain(GammaPolicy::fixed(1e-2)),
            1e-4,
            5.0,
        ),
        "fig1-sgd" => {
            let mut c = base(
                name,
                ModelSpec::Gaussian,
                fig1_dataset(),
                OptimizerSpec::Sgd { lr: 1e-3 },
                1.0,
                2e4,
            );
            c.record_every = 10;
            c
        }
        "fig1-averaged-sgd" => {
            let opt = OptimizerSpec::AveragedSgd {
                gamma: 1e-2,
                noise: AveragingNoise::None,
            };
            let mut c = base(name, ModelSpec::Gaussian, fig1_dataset(), opt, 1e-4, 2.0);
            c.record_every = 10;
            c
        }
        "gaussian-natural-gradient" => {
            let opt = OptimizerSpec::NaturalGradient {
                fisher: FisherSource::Exact,
            };
            base(name, ModelSpec::Gaussian, fig1_dataset(), opt, 1e-3, 5.0)
        }
        "gaussian-natural-gradient-mc" => {
            let opt = OptimizerSpec::NaturalGradient {
                fisher: FisherSource::MonteCarlo { samples: 100 },
            };
            base(name, ModelSpec::Gaussian, fig1_dataset(), opt, 1e-2, 5.0)
        }
        "gaussian-sweep" => {
            let mut c = base(
                name,
                ModelSpec::Gaussian,
                fig1_dataset(),
                plain(GammaPolicy::fixed(1e-2)),
                1e-3,
                1.0,
            );
            c.record_every = 1000;
            c.sweep = Some(SweepGrid {
                gammas: vec![1e-2],
                delta_ts: vec![1e-2, 1e-3, 1e-4],
                seeds: Some((1..=10).collect()),
            });
            c
        }
        "linear-tango" => base(
            name,
            linear(matched),
            linear_dataset(),
            plain(GammaPolicy::MaxNorm),
            1e-3,
            5.0,
        ),
        "linear-tango-minibatch" => {
            let opt = tango(
                GammaPolicy::gaussian_kurtosis(),
                4,
                PseudoVariant::Sampled,
                PreconditionerSpec::Identity,
            );
            base(name, linear(matched), linear_dataset(), opt, 1e-3, 5.0)
        }
        "linear-tango-rmsprop" => {
            let opt = tango(
                GammaPolicy::MomentRatio,
                1,
                PseudoVariant::Sampled,
                PreconditionerSpec::Rmsprop { rho: 0.99 },
            );
            base(name, linear(matched), linear_dataset(), opt, 1e-3, 5.0)
        }
        "linear-tango-fixed-preconditioner" => {
            let opt = tango(
                GammaPolicy::fixed(1e-2),
                1,
                PseudoVariant::Sampled,
                PreconditionerSpec::FixedMatrix {
                    rows: vec![vec![1.0, 0.0], vec![0.0, 0.5]],
                },
            );
            base(name, linear(matched), linear_dataset(), opt, 1e-3, 5.0)
        }
        "linear-running-mse" => base(
            name,
            linear(NoiseVariance::RunningMse { initial: 1.0 }),
            linear_dataset(),
            plain(GammaPolicy::MaxNorm),
            1e-3,
            5.0,
        ),
        "linear-averaged-sgd-prop2" => {
            let opt = OptimizerSpec::AveragedSgd {
                gamma: 1e-2,
                noise: AveragingNoise::Prop2,
            };
            base(name, linear(matched), linear_dataset(), opt, 1e-3, 5.0)
        }
        "linear-sweep" => {
            let mut c = base(
                name,
                linear(matched),
                linear_dataset(),
                plain(GammaPolicy::fixed(1e-2)),
                1e-2,
                1.0,
            );
            c.record_every = 1000;
            c.sweep = Some(SweepGrid {
                gammas: vec![1e-2, 1e-1, 10.0],
                delta_ts: vec![1e-2, 1e-3],
                seeds: Some(vec![1, 2]),
            });
            c
        }
        "softmax-tango" => base(
            name,
            softmax,
            softmax_dataset(),
            plain(GammaPolicy::gaussian_kurtosis()),
            1e-3,
            5.0,
        ),
        "softmax-tango-outer-product" => {
            let opt = tango(
                GammaPolicy::MaxNorm,
                1,
                PseudoVariant::OuterProduct,
                PreconditionerSpec::InvDiagFisher,
            );
            base(name, softmax, softmax_dataset(), opt, 1e-3, 5.0)
        }
        _ => return None,
    };
    Some(cfg)
}

pub fn all() -> Vec<ExperimentConfig> {
    NAMES
        .iter()
        .map(|n| builtin(n).expect("registered name"))
        .collect()
}
