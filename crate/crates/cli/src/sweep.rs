//! Grids of runs compared against the natural-gradient flow endpoint.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tango_core::optimizers::{self, StepSchedule};
use tango_core::reference::{solve_flow, FlowProblem, Integrator, NaturalGradientFlow};

use crate::config::{self, ExperimentConfig};
use crate::output;

/// Endpoints beyond this norm count as divergent even when finite.
pub const BLOWUP_NORM: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub delta_t: f64,
    pub seed: u64,
    pub steps: usize,
    pub diverged: bool,
    /// Step at which a divergent run stopped.
    pub diverged_at: Option<usize>,
    /// `‖θ_T − θ_ref(T)‖`; NaN for divergent cells.
    pub endpoint_error: f64,
    pub final_theta: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub reference_step: f64,
    pub reference_endpoint: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Seed-averaged endpoint error for each `(γ, δt)` pair, in row order.
    pub fn mean_errors(&self) -> Vec<(f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64, usize)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some(c) if c.0 == r.gamma && c.1 == r.delta_t => {
                    c.2 += r.endpoint_error;
                    c.3 += 1;
                }
                _ => out.push((r.gamma, r.delta_t, r.endpoint_error, 1)),
            }
        }
        out.into_iter()
            .map(|(g, d, s, n)| (g, d, s / n as f64))
            .collect()
    }
}

fn check_grid(name: &str, values: &[f64], max: f64) -> Result<()> {
    if values.is_empty() {
        bail!("sweep.{name}: grid is empty");
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= max)) {
        bail!("sweep.{name}: value {v} outside (0, {max}]");
    }
    Ok(())
}

pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepResult> {
    let Some(grid) = &cfg.sweep else {
        bail!("sweep: config has no [sweep] table");
    };
    check_grid("gammas", &grid.gammas, f64::INFINITY)?;
    check_grid("delta_ts", &grid.delta_ts, 1.0)?;
    let seeds = grid.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    if seeds.is_empty() {
        bail!("sweep.seeds: grid is empty");
    }
    let exp = cfg.build()?;
    let optimizers: Vec<_> = grid
        .gammas
        .iter()
        .map(|g| config::with_gamma(&cfg.optimizer, *g))
        .collect::<Result<_>>()?;

    let h = grid.delta_ts.iter().copied().fold(f64::INFINITY, f64::min) / 10.0;
    let field = NaturalGradientFlow::new(&exp.model, &exp.dataset);
    let reference = solve_flow(
        &FlowProblem::new(&field, exp.theta0.clone(), cfg.horizon),
        Integrator::Rk4,
        h,
    )
    .context("reference flow")?;
    let target = reference.endpoint().clone();

    let mut cells = Vec::new();
    for (gi, gamma) in grid.gammas.iter().enumerate() {
        for dt in &grid.delta_ts {
            for seed in &seeds {
                cells.push((gi, *gamma, *dt, *seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    let run_cell = |&(gi, gamma, dt, seed): &(usize, f64, f64, u64)| -> SweepRow {
        let mut rc = exp.run.clone();
        rc.optimizer = optimizers[gi].clone();
        rc.schedule = StepSchedule::constant(dt);
        rc.seed = seed;
        let steps = rc.schedule.steps_for(rc.horizon).unwrap_or(0);
        rc.record_every = steps.max(1);
        match optimizers::run(&rc, &exp.model, &exp.dataset, &exp.theta0) {
            Ok(rec) => {
                let theta = rec.final_theta().expect("at least one row");
                let blown = theta.norm() > BLOWUP_NORM;
                SweepRow {
                    gamma,
                    delta_t: dt,
                    seed,
                    steps: rec.steps,
                    diverged: blown,
                    diverged_at: None,
                    endpoint_error: if blown {
                        f64::NAN
                    } else {
                        (&theta - &target).norm()
                    },
                    final_theta: theta.iter().copied().collect(),
                    message: if blown {
                        format!("final |theta| = {:e} exceeds {BLOWUP_NORM:e}", theta.norm())
                    } else {
                        String::new()
                    },
                }
            }
            Err(e) => SweepRow {
                gamma,
                delta_t: dt,
                seed,
                steps,
                diverged: true,
                diverged_at: e.step(),
                endpoint_error: f64::NAN,
                final_theta: vec![f64::NAN; exp.theta0.len()],
                message: e.to_string(),
            },
        }
    };
    let mut rows: Vec<SweepRow> = pool.install(|| cells.par_iter().map(run_cell).collect());
    rows.sort_by(|a, b| {
        a.gamma
            .total_cmp(&b.gamma)
            .then(a.delta_t.total_cmp(&b.delta_t))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(SweepResult {
        reference_step: h,
        reference_endpoint: target.iter().copied().collect(),
        rows,
    })
}

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let d = result.reference_endpoint.len();
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header: Vec<String> = [
        "gamma",
        "delta_t",
        "seed",
        "steps",
        "status",
        "diverged_at",
        "endpoint_error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..d).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for r in &result.rows {
        let mut f = vec![
            output::real(r.gamma),
            output::real(r.delta_t),
            r.seed.to_string(),
            r.steps.to_string(),
            if r.diverged { "diverged" } else { "ok" }.to_string(),
            r.diverged_at.map(|s| s.to_string()).unwrap_or_default(),
            output::real(r.endpoint_error),
        ];
        f.extend(r.final_theta.iter().map(|x| output::real(*x)));
        w.write_record(&f)?;
    }
    w.flush()?;
    Ok(())
}
