use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::{Dataset, Model, ParamVector};
use crate::optimizers::{run, GammaPolicy, OptimizerSpec, RunConfig};
use crate::reference::{
    prop4_iterate, solve_flow, FlowField, FlowProblem, Integrator, NaturalGradientFlow,
};
use crate::rng;

use super::{fit_loglog_slope, Report};

/// Accepted slope window for stochastic TANGO.
pub const TANGO_SLOPE: (f64, f64) = (0.35, 1.2);
/// Accepted slope window for the deterministic two-rate iteration.
pub const PROP4_SLOPE: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateCell {
    pub delta_t: f64,
    /// Mean endpoint error over the seeds that finished; `NaN` if none did.
    pub mean_error: f64,
    pub seeds: usize,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateStudyResult {
    pub delta_ts: Vec<f64>,
    pub endpoint_errors: Vec<f64>,
    /// `NaN` when some cell has no finite error.
    pub fitted_slope: f64,
    pub cells: Vec<RateCell>,
}

impl RateStudyResult {
    fn from_cells(cells: Vec<RateCell>) -> Self {
        let delta_ts: Vec<f64> = cells.iter().map(|c| c.delta_t).collect();
        let endpoint_errors: Vec<f64> = cells.iter().map(|c| c.mean_error).collect();
        let fitted_slope = fit_loglog_slope(&delta_ts, &endpoint_errors).unwrap_or(f64::NAN);
        Self {
            delta_ts,
            endpoint_errors,
            fitted_slope,
            cells,
        }
    }

    pub fn slope_within(&self, window: (f64, f64)) -> bool {
        self.fitted_slope >= window.0 && self.fitted_slope <= window.1
    }

    /// Errors strictly decrease as `δt` decreases.
    pub fn strictly_monotone(&self) -> bool {
        let mut pairs: Vec<(f64, f64)> = self
            .delta_ts
            .iter()
            .copied()
            .zip(self.endpoint_errors.iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn to_report(&self, name: &str, window: (f64, f64), require_monotone: bool) -> Report {
        let passed = self.slope_within(window) && (!require_monotone || self.strictly_monotone());
        let mut r = Report::new(name, passed)
            .value("slope", self.fitted_slope)
            .value("slope_min", window.0)
            .value("slope_max", window.1);
        for c in &self.cells {
            r = r.value(&format!("error@{:e}", c.delta_t), c.mean_error);
            if c.diverged > 0 {
                r = r.note(format!(
                    "delta_t = {:e}: {} of {} seeds diverged",
                    c.delta_t, c.diverged, c.seeds
                ));
            }
        }
        if require_monotone {
            r = r.value("monotone", if self.strictly_monotone() { 1.0 } else { 0.0 });
        }
        r
    }
}

fn check_grid(delta_ts: &[f64]) -> Result<f64> {
    if delta_ts.is_empty() || delta_ts.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
        return Err(Error::InvalidSchedule(
            "rate study needs step sizes in (0, 1]".into(),
        ));
    }
    Ok(delta_ts.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Endpoint error of TANGO against the natural-gradient flow, averaged over
/// seeds `seed ^ i`. The reference is rk4 at a tenth of the finest `δt`.
#[allow(clippy::too_many_arguments)]
pub fn tango_rate_study<M: Model + Clone>(
    model: &M,
    dataset: &Dataset,
    theta0: &ParamVector,
    gamma: &GammaPolicy,
    delta_ts: &[f64],
    horizon: f64,
    n_seeds: usize,
    seed: u64,
) -> Result<RateStudyResult> {
    let dt_min = check_grid(delta_ts)?;
    if n_seeds == 0 {
        return Err(Error::InvalidParameter(
            "rate study needs at least one seed".into(),
        ));
    }
    let field = NaturalGradientFlow::new(model, dataset);
    let reference = solve_flow(
        &FlowProblem::new(&field, theta0.clone(), horizon),
        Integrator::Rk4,
        dt_min / 10.0,
    )?;
    let target = reference.endpoint();
    let mut cells = Vec::with_capacity(delta_ts.len());
    for &dt in delta_ts {
        let (mut sum, mut finished) = (0.0, 0);
        for i in 0..n_seeds {
            let mut cfg = RunConfig::new(
                OptimizerSpec::tango(*gamma),
                dt,
                horizon,
                rng::split_seed(seed, i as u64),
            );
            cfg.record_every = usize::MAX;
            if let Ok(rec) = run(&cfg, model, dataset, theta0) {
                let theta = rec.final_theta().expect("a run records its last step");
                let err = (theta - target).norm();
                if err.is_finite() {
                    sum += err;
                    finished += 1;
                }
            }
        }
        cells.push(RateCell {
            delta_t: dt,
            mean_error: if finished > 0 {
                sum / finished as f64
            } else {
                f64::NAN
            },
            seeds: n_seeds,
            diverged: n_seeds - finished,
        });
    }
    Ok(RateStudyResult::from_cells(cells))
}

/// Endpoint error of the deterministic two-rate iteration against rk4 of the
/// flow with metric `A`, at a tenth of the finest `δt`.
pub fn prop4_rate_study(
    field: &dyn FlowField,
    theta0: &ParamVector,
    gamma: f64,
    delta_ts: &[f64],
    horizon: f64,
) -> Result<RateStudyResult> {
    let dt_min = check_grid(delta_ts)?;
    let problem = FlowProblem::new(field, theta0.clone(), horizon);
    let reference = solve_flow(&problem, Integrator::Rk4, dt_min / 10.0)?;
    let mut cells = Vec::with_capacity(delta_ts.len());
    for &dt in delta_ts {
        let (err, diverged) = match prop4_iterate(&problem, gamma, dt, usize::MAX) {
            Ok(rec) => (
                (rec.final_theta().expect("a run records its last step") - reference.endpoint())
                    .norm(),
                0,
            ),
            Err(Error::Diverged { .. }) => (f64::NAN, 1),
            Err(e) => return Err(e),
        };
        cells.push(RateCell {
            delta_t: dt,
            mean_error: err,
            seeds: 1,
            diverged,
        });
    }
    Ok(RateStudyResult::from_cells(cells))
}
