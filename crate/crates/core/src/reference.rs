//! Continuous-time reference trajectories.
//!
//! A [`FlowField`] supplies a drift `F(θ)` and an SPD metric `A(θ)`; the flow
//! is `dθ/dt = −A(θ)⁻¹ F(θ)`. The natural-gradient flow uses the expected
//! gradient as drift and the Fisher matrix as metric.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, MIN_EIGENVALUE};
use crate::models::{self, Dataset, Model, ParamVector};
use crate::optimizers::{ceil_ratio, TrajectoryRecord, TrajectoryRow};
use crate::rng;

/// Largest number of nodes a [`FlowSolution`] keeps.
pub const MAX_NODES: usize = 100_000;

pub trait FlowField {
    fn dim(&self) -> usize;
    fn drift(&self, theta: &ParamVector) -> Result<DVector<f64>>;
    fn metric(&self, theta: &ParamVector) -> Result<DMatrix<f64>>;

    /// `−A(θ)⁻¹ F(θ)` by an SPD solve.
    fn velocity(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        let a = self.metric(theta)?;
        check_metric(&a)?;
        let f = self.drift(theta)?;
        Ok(-linalg::spd_solve(&a, &f, MIN_EIGENVALUE)?)
    }
}

fn check_metric(a: &DMatrix<f64>) -> Result<()> {
    let scale = 1.0 + a.amax();
    if linalg::max_asymmetry(a) > 1e-12 * scale {
        return Err(Error::Precondition("metric is not symmetric".into()));
    }
    Ok(())
}

pub struct FlowProblem<'a> {
    pub field: &'a dyn FlowField,
    pub theta0: ParamVector,
    pub horizon: f64,
}

impl<'a> FlowProblem<'a> {
    pub fn new(field: &'a dyn FlowField, theta0: ParamVector, horizon: f64) -> Self {
        Self {
            field,
            theta0,
            horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub times: Vec<f64>,
    pub states: Vec<ParamVector>,
}

impl FlowSolution {
    pub fn endpoint(&self) -> &ParamVector {
        self.states
            .last()
            .expect("a solution has at least one node")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("a solution has at least one node")
    }

    /// Linear interpolation between stored nodes; `t` is clamped to `[0, T]`.
    pub fn at(&self, t: f64) -> ParamVector {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let hi = self.times.partition_point(|&s| s < t);
        let lo = hi - 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        &self.states[lo] * (1.0 - w) + &self.states[hi] * w
    }
}

/// Integrates the flow with `⌈T/h⌉` uniform steps of size `T/⌈T/h⌉ ≤ h`.
pub fn solve_flow(problem: &FlowProblem<'_>, method: Integrator, h: f64) -> Result<FlowSolution> {
    let t_end = problem.horizon;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(
            "flow horizon must be positive".into(),
        ));
    }
    if !(h > 0.0 && h <= t_end) {
        return Err(Error::InvalidParameter(
            "flow step must lie in (0, T]".into(),
        ));
    }
    let field = problem.field;
    if problem.theta0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            what: "theta0",
            expected: field.dim(),
            got: problem.theta0.len(),
        });
    }
    let n = ceil_ratio(t_end, h);
    let step = t_end / n as f64;
    let stride = n.div_ceil(MAX_NODES - 1).max(1);

    let mut theta = problem.theta0.clone();
    let mut times = vec![0.0];
    let mut states = vec![theta.clone()];
    for i in 1..=n {
        theta = match method {
            Integrator::Euler => &theta + field.velocity(&theta)? * step,
            Integrator::Rk4 => {
                let k1 = field.velocity(&theta)?;
                let k2 = field.velocity(&(&theta + &k1 * (step / 2.0)))?;
                let k3 = field.velocity(&(&theta + &k2 * (step / 2.0)))?;
                let k4 = field.velocity(&(&theta + &k3 * step))?;
                &theta + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0)
            }
        };
        if !linalg::all_finite(&theta) {
            return Err(Error::Diverged { step: i });
        }
        if i % stride == 0 || i == n {
            times.push(if i == n { t_end } else { i as f64 * step });
            states.push(theta.clone());
        }
    }
    Ok(FlowSolution { times, states })
}

/// Affine drift `F(θ) = Kθ − b` with a constant metric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFlow {
    pub a: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearFlow {
    pub fn new(a: DMatrix<f64>, k: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let d = b.len();
        if a.shape() != (d, d) || k.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                what: "linear flow matrices",
                expected: d,
                got: a.nrows(),
            });
        }
        check_metric(&a)?;
        let lo = linalg::min_eigenvalue(&a);
        if !(lo >= MIN_EIGENVALUE) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
        }
        Ok(Self { a, k, b })
    }
}

impl FlowField for LinearFlow {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn drift(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        Ok(&self.k * theta - &self.b)
    }

    fn metric(&self, _theta: &ParamVector) -> Result<DMatrix<f64>> {
        Ok(self.a.clone())
    }
}

/// Metric used by [`NaturalGradientFlow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowMetric {
    Exact,
    /// `mc_fisher` with a fresh stream from the same seed at every
    /// evaluation, so the metric is a deterministic function of `θ`.
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

/// `dθ/dt = −J(θ)⁻¹ E[∂ℓ/∂θ]` over a finite dataset.
pub struct NaturalGradientFlow<'a, M: ?Sized> {
    pub model: &'a M,
    pub dataset: &'a Dataset,
    pub metric: FlowMetric,
}

impl<'a, M: Model + ?Sized> NaturalGradientFlow<'a, M> {
    pub fn new(model: &'a M, dataset: &'a Dataset) -> Self {
        Self {
            model,
            dataset,
            metric: FlowMetric::Exact,
        }
    }

    pub fn with_metric(mut self, metric: FlowMetric) -> Self {
        self.metric = metric;
        self
    }
}

impl<M: Model + ?Sized> FlowField for NaturalGradientFlow<'_, M> {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn drift(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        models::expected_gradient(self.model, theta, self.dataset)
    }

    fn metric(&self, theta: &ParamVector) -> Result<DMatrix<f64>> {
        let fisher = match self.metric {
            FlowMetric::Exact => self.model.exact_fisher(theta, self.dataset)?,
            FlowMetric::MonteCarlo { samples, seed } => {
                let mut r = rng::stream(seed, rng::AUX_STREAM);
                models::mc_fisher(self.model, theta, self.dataset, samples, &mut r)?
            }
        };
        Ok(fisher.into_inner())
    }

    fn velocity(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        let j = self.metric(theta)?;
        let g = self.drift(theta)?;
        linalg::spd_solve(&j, &g, MIN_EIGENVALUE)
            .map(|d| -d)
            .map_err(|e| match e {
                Error::NotPositiveDefinite { min_eigenvalue } => {
                    Error::SingularFisher { min_eigenvalue }
                }
                other => other,
            })
    }
}

/// State of the deterministic two-rate iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop4State {
    pub theta: ParamVector,
    pub v: DVector<f64>,
    pub k: usize,
}

impl Prop4State {
    pub fn new(theta: ParamVector) -> Self {
        let d = theta.len();
        Self {
            theta,
            v: DVector::zeros(d),
            k: 0,
        }
    }
}

/// `v ← v + γF(θ) − γA(θ)v`, then `θ ← θ − δt v`.
pub fn prop4_step(
    state: &mut Prop4State,
    field: &dyn FlowField,
    gamma: f64,
    delta_t: f64,
) -> Result<()> {
    let a = field.metric(&state.theta)?;
    check_metric(&a)?;
    let eigs = linalg::symmetric_eigenvalues(&a);
    let lo = eigs[0];
    let hi = eigs[eigs.len() - 1];
    if !(lo >= MIN_EIGENVALUE) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    if gamma * hi > 1.0 {
        return Err(Error::ContractionViolation(gamma * hi));
    }
    let f = field.drift(&state.theta)?;
    let v = &state.v + (f - &a * &state.v) * gamma;
    let theta = &state.theta - &v * delta_t;
    if !linalg::all_finite(&theta) || !linalg::all_finite(&v) {
        return Err(Error::Diverged { step: state.k + 1 });
    }
    state.v = v;
    state.theta = theta;
    state.k += 1;
    Ok(())
}

/// Runs [`prop4_step`] for `⌈T/δt⌉` steps from `v₀ = 0`. The `loss` column
/// is `NaN`: the iteration has no sampled data.
pub fn prop4_iterate(
    problem: &FlowProblem<'_>,
    gamma: f64,
    delta_t: f64,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    if !(delta_t > 0.0 && delta_t <= 1.0) {
        return Err(Error::InvalidSchedule("delta_t must lie in (0, 1]".into()));
    }
    let every = record_every.max(1);
    let n = ceil_ratio(problem.horizon, delta_t);
    let mut state = Prop4State::new(problem.theta0.clone());
    let mut rows = Vec::new();
    for k in 1..=n {
        prop4_step(&mut state, problem.field, gamma, delta_t).map_err(|e| e.at_step(k))?;
        if k % every == 0 || k == n {
            rows.push(TrajectoryRow {
                step: k,
                t: k as f64 * delta_t,
                theta: state.theta.iter().copied().collect(),
                v_norm: state.v.norm(),
                loss: f64::NAN,
            });
        }
    }
    Ok(TrajectoryRecord {
        param_dim: problem.theta0.len(),
        steps: n,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::data::DatasetGenerator;
    use crate::models::GaussianModel;
    use nalgebra::{dmatrix, dvector};

    fn scalar_flow(a: f64) -> LinearFlow {
        LinearFlow::new(dmatrix![a], dmatrix![1.0], dvector![0.0]).unwrap()
    }

    fn fig1_data() -> Dataset {
        DatasetGenerator::Gaussian {
            mean: 10.0,
            std: 1.0,
        }
        .generate(1000, 1)
        .unwrap()
    }

    #[test]
    fn exponential_decay() {
        let field = scalar_flow(1.0);
        let p = FlowProblem::new(&field, dvector![2.0], 1.0);
        let sol = solve_flow(&p, Integrator::Rk4, 1e-3).unwrap();
        assert!((sol.endpoint()[0] - 2.0 * libm::exp(-1.0)).abs() <= 1e-8);
        assert_eq!(sol.times[0], 0.0);
        assert_eq!(sol.horizon(), 1.0);
        assert_eq!(sol.times.len(), 1001);
    }

    #[test]
    fn preconditioning_halves_the_rate() {
        let field = scalar_flow(2.0);
        let p = FlowProblem::new(&field, dvector![1.0], 3.0);
        let sol = solve_flow(&p, Integrator::Rk4, 1e-3).unwrap();
        assert!((sol.endpoint()[0] - libm::exp(-1.5)).abs() <= 1e-8);
    }

    #[test]
    fn interpolation_between_nodes() {
        let field = scalar_flow(1.0);
        let p = FlowProblem::new(&field, dvector![1.0], 1.0);
        let sol = solve_flow(&p, Integrator::Euler, 0.5).unwrap();
        // Nodes 1, 0.5, 0.25.
        assert!((sol.at(0.25)[0] - 0.75).abs() < 1e-15);
        assert!((sol.at(0.75)[0] - 0.375).abs() < 1e-15);
        assert_eq!(sol.at(5.0)[0], 0.25);
    }

    #[test]
    fn long_runs_are_thinned() {
        let field = scalar_flow(1.0);
        let p = FlowProblem::new(&field, dvector![1.0], 1.0);
        let sol = solve_flow(&p, Integrator::Euler, 1e-6).unwrap();
        assert!(sol.times.len() <= MAX_NODES);
        assert_eq!(sol.horizon(), 1.0);
        assert!(sol.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bad_steps_and_metrics() {
        let field = scalar_flow(1.0);
        let p = FlowProblem::new(&field, dvector![1.0], 1.0);
        assert!(solve_flow(&p, Integrator::Rk4, 0.0).is_err());
        assert!(solve_flow(&p, Integrator::Rk4, 2.0).is_err());
        assert!(LinearFlow::new(dmatrix![0.0], dmatrix![1.0], dvector![0.0]).is_err());
    }

    #[test]
    fn singular_fisher_along_the_flow() {
        let ds = Dataset::new(vec![crate::models::Sample::new(vec![1.0, 0.0], 1.0)]).unwrap();
        let model = crate::models::LinearRegression::with_unit_noise(2);
        let field = NaturalGradientFlow::new(&model, &ds);
        let p = FlowProblem::new(&field, dvector![0.0, 0.0], 1.0);
        let err = solve_flow(&p, Integrator::Rk4, 0.1).unwrap_err();
        assert!(matches!(err, Error::SingularFisher { .. }));
    }

    fn halving_ratio(p: &FlowProblem<'_>, method: Integrator, h: f64) -> f64 {
        let e1 = solve_flow(p, method, h).unwrap();
        let e2 = solve_flow(p, method, h / 2.0).unwrap();
        let e4 = solve_flow(p, method, h / 4.0).unwrap();
        (e1.endpoint() - e2.endpoint()).norm() / (e2.endpoint() - e4.endpoint()).norm()
    }

    #[test]
    fn step_halving_on_builtin_flows() {
        let data = fig1_data();
        let gauss = NaturalGradientFlow::new(&GaussianModel, &data);
        let lin_data = DatasetGenerator::Linear {
            theta: vec![1.0, -2.0],
            noise_std: 0.3,
            intercept: true,
        }
        .generate(200, 3)
        .unwrap();
        let model = crate::models::LinearRegression::with_unit_noise(2);
        let lin = NaturalGradientFlow::new(&model, &lin_data);
        let affine = LinearFlow::new(
            dmatrix![2.0, 0.3; 0.3, 1.0],
            dmatrix![1.0, 0.2; -0.2, 0.5],
            dvector![1.0, -1.0],
        )
        .unwrap();
        let problems = [
            FlowProblem::new(&gauss, dvector![0.0, 0.0], 2.0),
            FlowProblem::new(&lin, dvector![0.0, 0.0], 2.0),
            FlowProblem::new(&affine, dvector![1.0, 1.0], 2.0),
        ];
        for p in &problems {
            assert!(halving_ratio(p, Integrator::Rk4, 0.01) >= 8.0);
            assert!(halving_ratio(p, Integrator::Euler, 0.01) >= 1.8);
        }
    }

    #[test]
    fn gaussian_flow_widens_before_narrowing() {
        let data = fig1_data();
        let field = NaturalGradientFlow::new(&GaussianModel, &data);
        let p = FlowProblem::new(&field, dvector![0.0, 0.0], 5.0);
        let sol = solve_flow(&p, Integrator::Rk4, 1e-3).unwrap();
        let ln_sigma: Vec<f64> = sol.states.iter().map(|s| s[1]).collect();
        let (peak, top) =
            ln_sigma.iter().enumerate().fold(
                (0, f64::MIN),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        assert!(top > 1.0);
        assert!(peak > 0 && peak < ln_sigma.len() - 1);
        assert!(*ln_sigma.last().unwrap() < top - 0.5);
        let fine = solve_flow(&p, Integrator::Rk4, 5e-4).unwrap();
        assert!((sol.endpoint() - fine.endpoint()).norm() <= 1e-6);
    }

    #[test]
    fn endpoint_is_independent_of_the_fisher_estimate() {
        let data = fig1_data();
        let exact = NaturalGradientFlow::new(&GaussianModel, &data);
        let mc =
            NaturalGradientFlow::new(&GaussianModel, &data).with_metric(FlowMetric::MonteCarlo {
                samples: 1_000_000,
                seed: 11,
            });
        let a = solve_flow(
            &FlowProblem::new(&exact, dvector![0.0, 0.0], 20.0),
            Integrator::Rk4,
            0.2,
        )
        .unwrap();
        let b = solve_flow(
            &FlowProblem::new(&mc, dvector![0.0, 0.0], 20.0),
            Integrator::Rk4,
            0.2,
        )
        .unwrap();
        assert!(
            (a.endpoint() - b.endpoint()).norm() <= 1e-6,
            "{} vs {}",
            a.endpoint(),
            b.endpoint()
        );
    }

    #[test]
    fn prop4_constant_field_converges_geometrically() {
        let a = dmatrix![2.0, 0.5; 0.5, 1.0];
        let b = dvector![1.0, -2.0];
        let field = LinearFlow::new(a.clone(), DMatrix::zeros(2, 2), b.clone()).unwrap();
        let gamma = 0.3;
        let f = -b;
        let target = linalg::spd_solve(&a, &f, 1e-12).unwrap();
        let contraction = DMatrix::identity(2, 2) - &a * gamma;
        let rate = 1.0 - gamma * linalg::min_eigenvalue(&a);
        let mut st = Prop4State::new(dvector![0.0, 0.0]);
        let mut power = DMatrix::identity(2, 2);
        let mut prev_gap = target.norm();
        for _ in 0..200 {
            prop4_step(&mut st, &field, gamma, 1e-9).unwrap();
            power = &power * &contraction;
            let closed = &target - &power * &target;
            assert!((&st.v - closed).amax() <= 1e-10);
            let gap = (&st.v - &target).norm();
            assert!(gap <= rate * prev_gap + 1e-14);
            prev_gap = gap;
        }
    }

    #[test]
    fn prop4_zero_drift_freezes_theta() {
        let field = LinearFlow::new(dmatrix![1.0], dmatrix![0.0], dvector![0.0]).unwrap();
        let p = FlowProblem::new(&field, dvector![3.0], 1.0);
        let rec = prop4_iterate(&p, 0.5, 0.01, 1).unwrap();
        assert_eq!(rec.steps, 100);
        assert!(rec
            .rows
            .iter()
            .all(|r| r.theta[0] == 3.0 && r.v_norm == 0.0));
    }

    #[test]
    fn prop4_rejects_large_gamma() {
        let field = scalar_flow(4.0);
        let p = FlowProblem::new(&field, dvector![1.0], 1.0);
        let err = prop4_iterate(&p, 0.5, 0.1, 1).unwrap_err();
        assert!(matches!(err, Error::AtStep { step: 1, .. }));
    }

    #[test]
    fn prop4_error_is_first_order() {
        let field = LinearFlow::new(
            dmatrix![2.0, 0.3; 0.3, 1.0],
            dmatrix![1.0, 0.2; -0.2, 0.5],
            dvector![1.0, -1.0],
        )
        .unwrap();
        let p = FlowProblem::new(&field, dvector![1.0, 1.0], 1.0);
        let reference = solve_flow(&p, Integrator::Rk4, 1e-5).unwrap();
        let mut logs = Vec::new();
        for dt in [1e-2, 1e-3, 1e-4] {
            let rec = prop4_iterate(&p, 0.4, dt, usize::MAX).unwrap();
            let err = (rec.final_theta().unwrap() - reference.endpoint()).norm();
            logs.push((libm::log(dt), libm::log(err)));
        }
        let n = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }
}
