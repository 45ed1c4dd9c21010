//! The Gaussian experiment: SGD, TANGO and averaged SGD against the
//! natural-gradient flow, started at `(μ, ln σ) = (0, 0)` on data `N(10, 1)`.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tango_core::models::{Dataset, GaussianModel, Model, ParamVector};
use tango_core::optimizers::{self, TrajectoryRecord, TrajectoryRow};
use tango_core::reference::{
    solve_flow, FlowField, FlowProblem, FlowSolution, Integrator, NaturalGradientFlow,
};

use crate::geometry;
use crate::output::{self, KeyValues};
use crate::registry;

/// Reference vertices kept for the distance computation.
const REFERENCE_VERTICES: usize = 20_001;
/// Rows kept in the reference CSV.
const REFERENCE_ROWS: usize = 2_001;
pub const HALVING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Options {
    /// `T` for TANGO, averaged SGD and the reference flow.
    pub horizon: f64,
    pub sgd_steps: usize,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for Fig1Options {
    fn default() -> Self {
        Self {
            horizon: 2.0,
            sgd_steps: 20_000,
            seed: 1,
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Distances {
    pub sgd: f64,
    pub tango: f64,
    pub averaged_sgd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Result {
    pub options: Fig1Options,
    pub theta0: ParamVector,
    pub sgd: TrajectoryRecord,
    pub tango: TrajectoryRecord,
    pub averaged_sgd: TrajectoryRecord,
    pub reference: TrajectoryRecord,
    pub reference_step: f64,
    /// Symmetric Hausdorff distance to the reference curve in `(μ, ln σ)`.
    pub distances: Fig1Distances,
    pub tango_max_sigma: f64,
    /// `‖θ_h(T) − θ_{h/2}(T)‖` of the reference flow.
    pub reference_halving_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Summary {
    pub options: Fig1Options,
    pub reference_step: f64,
    pub distances: Fig1Distances,
    pub tango_max_sigma: f64,
    pub reference_halving_error: f64,
    pub reference_endpoint: Vec<f64>,
    pub tango_closer_than_sgd: bool,
    pub tango_closer_than_averaged_sgd: bool,
    pub variance_rises: bool,
    pub reference_stable: bool,
}

impl Fig1Result {
    pub fn tango_closer_than_sgd(&self) -> bool {
        self.distances.tango < self.distances.sgd
    }

    pub fn tango_closer_than_averaged_sgd(&self) -> bool {
        self.distances.tango < self.distances.averaged_sgd
    }

    pub fn variance_rises(&self) -> bool {
        self.tango_max_sigma > 1.0
    }

    pub fn reference_stable(&self) -> bool {
        self.reference_halving_error <= HALVING_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.tango_closer_than_sgd()
            && self.tango_closer_than_averaged_sgd()
            && self.variance_rises()
            && self.reference_stable()
    }

    pub fn summary(&self) -> Fig1Summary {
        Fig1Summary {
            options: self.options.clone(),
            reference_step: self.reference_step,
            distances: self.distances.clone(),
            tango_max_sigma: self.tango_max_sigma,
            reference_halving_error: self.reference_halving_error,
            reference_endpoint: self
                .reference
                .rows
                .last()
                .map(|r| r.theta.clone())
                .unwrap_or_default(),
            tango_closer_than_sgd: self.tango_closer_than_sgd(),
            tango_closer_than_averaged_sgd: self.tango_closer_than_averaged_sgd(),
            variance_rises: self.variance_rises(),
            reference_stable: self.reference_stable(),
        }
    }

    pub fn key_values(&self) -> KeyValues {
        let s = self.summary();
        let mut kv = KeyValues::default();
        kv.real("horizon", s.options.horizon)
            .push("sgd_steps", s.options.sgd_steps.to_string())
            .push("seed", s.options.seed.to_string())
            .real("reference_step", s.reference_step)
            .reals("reference_endpoint", &s.reference_endpoint)
            .real("distance.sgd", s.distances.sgd)
            .real("distance.tango", s.distances.tango)
            .real("distance.averaged_sgd", s.distances.averaged_sgd)
            .real("tango_max_sigma", s.tango_max_sigma)
            .real("reference_halving_error", s.reference_halving_error)
            .push("tango_closer_than_sgd", s.tango_closer_than_sgd.to_string())
            .push(
                "tango_closer_than_averaged_sgd",
                s.tango_closer_than_averaged_sgd.to_string(),
            )
            .push("variance_rises", s.variance_rises.to_string())
            .push("reference_stable", s.reference_stable.to_string());
        kv
    }
}

fn polyline(theta0: &ParamVector, record: &TrajectoryRecord) -> Vec<Vec<f64>> {
    let mut pts = vec![theta0.iter().copied().collect::<Vec<f64>>()];
    pts.extend(record.rows.iter().map(|r| r.theta.clone()));
    pts
}

/// Reference nodes as trajectory rows: `v_norm` is the flow speed and `loss`
/// the full-dataset mean log-loss.
pub fn flow_record<M: Model + ?Sized>(
    model: &M,
    dataset: &Dataset,
    field: &dyn FlowField,
    solution: &FlowSolution,
    max_rows: usize,
) -> Result<TrajectoryRecord> {
    let idx: Vec<usize> = geometry::thin(&(0..solution.times.len()).collect::<Vec<_>>(), max_rows);
    let mut rows = Vec::with_capacity(idx.len());
    for i in idx {
        let theta = &solution.states[i];
        let loss = dataset
            .samples()
            .iter()
            .map(|s| model.log_loss(theta, &s.x, s.y))
            .sum::<tango_core::Result<f64>>()?
            / dataset.len() as f64;
        rows.push(TrajectoryRow {
            step: i,
            t: solution.times[i],
            theta: theta.iter().copied().collect(),
            v_norm: field.velocity(theta)?.norm(),
            loss,
        });
    }
    Ok(TrajectoryRecord {
        param_dim: model.param_dim(),
        steps: solution.times.len() - 1,
        rows,
    })
}

pub fn run_fig1(opts: &Fig1Options) -> Result<Fig1Result> {
    let fetch = |name: &str| {
        registry::builtin(name)
            .expect("built-in fig1 config")
            .with_seed(opts.seed)
    };
    let mut tango_cfg = fetch("fig1-tango");
    tango_cfg.horizon = opts.horizon;
    let mut avg_cfg = fetch("fig1-averaged-sgd");
    avg_cfg.horizon = opts.horizon;
    let mut sgd_cfg = fetch("fig1-sgd");
    sgd_cfg.horizon = opts.sgd_steps as f64;
    for c in [&mut tango_cfg, &mut avg_cfg, &mut sgd_cfg] {
        c.record_every = opts.record_every;
    }

    let exp = tango_cfg.build()?;
    let dataset = exp.dataset;
    let theta0 = exp.theta0;
    let go = |cfg: &crate::config::ExperimentConfig| -> Result<TrajectoryRecord> {
        optimizers::run(&cfg.run_config(), &GaussianModel, &dataset, &theta0)
            .with_context(|| cfg.name.clone())
    };
    let tango = go(&tango_cfg)?;
    let averaged_sgd = go(&avg_cfg)?;
    let sgd = go(&sgd_cfg)?;

    let field = NaturalGradientFlow::new(&GaussianModel, &dataset);
    let h = tango_cfg.schedule.delta_t(1) / 10.0;
    let solve = |step: f64| {
        let field = NaturalGradientFlow::new(&GaussianModel, &dataset);
        solve_flow(
            &FlowProblem::new(&field, theta0.clone(), opts.horizon),
            Integrator::Rk4,
            step,
        )
    };
    let (full, half) = rayon::join(|| solve(h), || solve(h / 2.0));
    let (full, half) = (
        full.context("reference flow")?,
        half.context("reference flow")?,
    );
    let reference_halving_error = (full.endpoint() - half.endpoint()).norm();

    let ref_line: Vec<Vec<f64>> = geometry::thin(&full.states, REFERENCE_VERTICES)
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();
    let distance = |rec: &TrajectoryRecord| geometry::hausdorff(&polyline(&theta0, rec), &ref_line);
    let distances = Fig1Distances {
        sgd: distance(&sgd),
        tango: distance(&tango),
        averaged_sgd: distance(&averaged_sgd),
    };
    let tango_max_sigma = tango
        .rows
        .iter()
        .map(|r| r.theta[1].exp())
        .fold(theta0[1].exp(), f64::max);
    let reference = flow_record(&GaussianModel, &dataset, &field, &full, REFERENCE_ROWS)?;

    Ok(Fig1Result {
        options: opts.clone(),
        theta0,
        sgd,
        tango,
        averaged_sgd,
        reference,
        reference_step: h,
        distances,
        tango_max_sigma,
        reference_halving_error,
    })
}

/// Long-format plot data: `series,step,t,mu,ln_sigma,sigma`, starting each
/// series at the initial point.
pub fn write_plot_data(
    path: &Path,
    theta0: &ParamVector,
    series: &[(&str, &TrajectoryRecord)],
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["series", "step", "t", "mu", "ln_sigma", "sigma"])?;
    for (name, rec) in series {
        let start = std::iter::once((0usize, 0.0, theta0[0], theta0[1]));
        let rest = rec
            .rows
            .iter()
            .map(|r| (r.step, r.t, r.theta[0], r.theta[1]));
        for (step, t, mu, ln_sigma) in start.chain(rest) {
            w.write_record([
                name.to_string(),
                step.to_string(),
                output::real(t),
                output::real(mu),
                output::real(ln_sigma),
                output::real(ln_sigma.exp()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fig1(result: &Fig1Result, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let series = [
        ("sgd", &result.sgd),
        ("tango", &result.tango),
        ("averaged_sgd", &result.averaged_sgd),
        ("reference", &result.reference),
    ];
    for (name, rec) in &series {
        output::write_trajectory_file(&dir.join(format!("fig1_{name}.csv")), rec)?;
    }
    write_plot_data(&dir.join("fig1_plot.csv"), &result.theta0, &series)?;
    output::write_text(&dir.join("fig1_summary.txt"), &result.key_values().render())?;
    output::write_json(&dir.join("fig1_summary.json"), &result.summary())
}
