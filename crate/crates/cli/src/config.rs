//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use tango_core::models::data::DatasetGenerator;
use tango_core::models::{
    BuiltinModel, Dataset, GaussianModel, LinearRegression, Model, NoiseVariance, ParamVector,
    Sample, SoftmaxRegression,
};
use tango_core::optimizers::{GammaPolicy, OptimizerSpec, RunConfig, StepSchedule};

/// One experiment: model, data, optimizer, schedule and run length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(with = "seed_serde")]
    pub seed: u64,
    /// Total time `T`; the run lasts `⌈T/δt⌉` steps.
    pub horizon: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Initial parameter; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub freeze_theta: bool,
    /// Output directory for `run` and `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelSpec,
    pub dataset: DatasetSpec,
    pub optimizer: OptimizerSpec,
    pub schedule: StepSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ModelSpec {
    Gaussian,
    Linear {
        input_dim: usize,
        #[serde(default)]
        noise: NoiseVariance,
    },
    Softmax {
        classes: usize,
        input_dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Generated {
        size: usize,
        #[serde(with = "seed_serde")]
        seed: u64,
        generator: DatasetGenerator,
    },
    /// Header row required; the last column is the output, the others the input.
    Csv { path: PathBuf },
}

/// Grids for `sweep`. `gammas` sets the fast rate (the learning rate for SGD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub gammas: Vec<f64>,
    pub delta_ts: Vec<f64>,
    /// Run seeds; the config seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

/// Everything needed to call [`tango_core::optimizers::run`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: BuiltinModel,
    pub dataset: Dataset,
    pub theta0: ParamVector,
    pub run: RunConfig,
}

fn one() -> usize {
    1
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Seeds above `i64::MAX` do not fit a TOML integer; they are written as strings.
mod seed_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(v),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("invalid config: {}", e.to_string().trim_end()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    /// Reads a config file. A relative dataset CSV path is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        if let DatasetSpec::Csv { path: csv } = &mut cfg.dataset {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    /// Replaces the run seed, as done for the `TANGO_SEED` override.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let Some(grid) = &mut self.sweep {
            grid.seeds = Some(vec![seed]);
        }
        self
    }

    pub fn build_model(&self) -> Result<BuiltinModel> {
        let m = match &self.model {
            ModelSpec::Gaussian => BuiltinModel::Gaussian(GaussianModel),
            ModelSpec::Linear { input_dim, noise } => {
                BuiltinModel::Linear(LinearRegression::new(*input_dim, *noise).context("model")?)
            }
            ModelSpec::Softmax { classes, input_dim } => BuiltinModel::Softmax(
                SoftmaxRegression::new(*classes, *input_dim).context("model")?,
            ),
        };
        Ok(m)
    }

    pub fn build_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSpec::Generated {
                size,
                seed,
                generator,
            } => generator
                .generate(*size, *seed)
                .context("dataset.generator"),
            DatasetSpec::Csv { path } => read_dataset_csv(path),
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            optimizer: self.optimizer.clone(),
            schedule: self.schedule.clone(),
            horizon: self.horizon,
            record_every: self.record_every,
            seed: self.seed,
            freeze_theta: self.freeze_theta,
        }
    }

    /// Validates every field and materializes model, dataset and θ₀.
    pub fn build(&self) -> Result<Experiment> {
        if self.name.trim().is_empty() {
            bail!("name: must not be empty");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bail!("horizon: must be positive and finite, got {}", self.horizon);
        }
        if self.record_every == 0 {
            bail!("record_every: must be at least 1");
        }
        self.schedule.validate().context("schedule")?;
        validate_optimizer(&self.optimizer)?;
        self.schedule.steps_for(self.horizon).context("horizon")?;

        let model = self.build_model()?;
        let dataset = self.build_dataset()?;
        if dataset.input_dim() != model.input_dim() {
            bail!(
                "dataset: input dimension {} does not match the model's {}",
                dataset.input_dim(),
                model.input_dim()
            );
        }
        if let ModelSpec::Softmax { classes, .. } = self.model {
            if let Some(s) = dataset
                .samples()
                .iter()
                .find(|s| !(s.y >= 0.0 && s.y.fract() == 0.0 && (s.y as usize) < classes))
            {
                bail!(
                    "dataset: label {} is not a class index below {classes}",
                    s.y
                );
            }
        }
        let theta0 = match &self.theta0 {
            Some(t) => ParamVector::from_column_slice(t),
            None => ParamVector::zeros(model.param_dim()),
        };
        model.check_params(&theta0).context("theta0")?;
        if let OptimizerSpec::Tango { preconditioner, .. } = &self.optimizer {
            preconditioner
                .build(model.param_dim())
                .context("optimizer.preconditioner")?;
        }
        Ok(Experiment {
            model,
            dataset,
            theta0,
            run: self.run_config(),
        })
    }
}

fn validate_optimizer(spec: &OptimizerSpec) -> Result<()> {
    let positive = |field: &str, v: f64| -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            bail!("optimizer.{field}: must be positive and finite, got {v}")
        }
    };
    match spec {
        OptimizerSpec::Tango {
            gamma, batch_size, ..
        } => {
            gamma.validate().context("optimizer.gamma")?;
            if *batch_size == 0 {
                bail!("optimizer.batch_size: must be at least 1");
            }
        }
        OptimizerSpec::Sgd { lr } => positive("lr", *lr)?,
        OptimizerSpec::AveragedSgd { gamma, .. } => positive("gamma", *gamma)?,
        OptimizerSpec::NaturalGradient { fisher } => {
            if let tango_core::optimizers::FisherSource::MonteCarlo { samples: 0 } = fisher {
                bail!("optimizer.fisher.samples: must be at least 1");
            }
        }
    }
    Ok(())
}

/// Sets the fast rate of an optimizer: γ for TANGO and averaged SGD, the
/// learning rate for SGD. Natural gradient has none.
pub fn with_gamma(spec: &OptimizerSpec, gamma: f64) -> Result<OptimizerSpec> {
    let mut spec = spec.clone();
    match &mut spec {
        OptimizerSpec::Tango { gamma: g, .. } => *g = GammaPolicy::fixed(gamma),
        OptimizerSpec::Sgd { lr } => *lr = gamma,
        OptimizerSpec::AveragedSgd { gamma: g, .. } => *g = gamma,
        OptimizerSpec::NaturalGradient { .. } => {
            bail!("sweep.gammas: natural_gradient has no fast rate")
        }
    }
    Ok(spec)
}

/// Reads `x_0,…,x_{p−1},y` rows with a header line.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("dataset.path: opening {}", path.display()))?;
    let width = reader
        .headers()
        .context("dataset.path: reading header")?
        .len();
    if width == 0 {
        bail!("dataset.path: {} has an empty header", path.display());
    }
    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("dataset.path: row {}", i + 1))?;
        let values: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("dataset.path: row {} is not numeric", i + 1))?;
        let (y, x) = values.split_last().expect("non-empty record");
        samples.push(Sample::new(x.to_vec(), *y));
    }
    Dataset::new(samples).with_context(|| format!("dataset.path: {}", path.display()))
}
