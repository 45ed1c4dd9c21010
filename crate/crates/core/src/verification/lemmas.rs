use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::noise::{NoiseConstants, NoiseDraw, NoiseSpec};
use super::{fit_loglog_slope, mc_threshold, Report, MC_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{Dataset, Model, ParamVector};
use crate::optimizers::{ceil_ratio, tango_step, GammaPolicy, OptimizerState, PseudoVariant};
use crate::rng;

/// Tolerance on the extra term of the contraction bound.
pub const CONTRACTION_SLACK: f64 = 1e-10;
/// Smallest accepted slope of the B-matrix deviation against `δt`.
pub const LEMMA11_MIN_SLOPE: f64 = 0.35;
/// Tolerance on the one-step identity between consecutive deviations.
pub const LEMMA11_IDENTITY_TOLERANCE: f64 = 1e-12;

fn require_stable(gamma: f64, r2: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    if gamma * r2 > 1.0 {
        return Err(Error::Precondition(format!(
            "gamma * R^2 = {} exceeds 1",
            gamma * r2
        )));
    }
    Ok(())
}

enum Outcome {
    Finished,
    Diverged,
}

/// Runs `v_k = v_{k−1} + γF̂_k − γÂ_k v_{k−1}`, `θ_k = θ_{k−1} − δt v_k` from
/// `v_0 = 0`, calling `visit(k, θ_{k−1}, v_{k−1}, draw, v_k)` at each step.
/// With `tolerate`, model errors and non-finite values end the run as a
/// divergence instead of an error.
#[allow(clippy::too_many_arguments)]
fn iterate(
    noise: &dyn NoiseSpec,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    n_steps: usize,
    rng: &mut dyn RngCore,
    tolerate: bool,
    mut visit: impl FnMut(usize, &ParamVector, &DVector<f64>, &NoiseDraw, &DVector<f64>) -> Result<()>,
) -> Result<Outcome> {
    let mut theta = theta0.clone();
    let mut v = DVector::zeros(theta0.len());
    for k in 1..=n_steps {
        let draw = match noise.draw(&theta, rng) {
            Ok(d) => d,
            Err(_) if tolerate => return Ok(Outcome::Diverged),
            Err(e) => return Err(e.at_step(k)),
        };
        let v_next = &v + (&draw.f_hat - &draw.a_hat * &v) * gamma;
        let theta_next = &theta - &v_next * delta_t;
        if !linalg::all_finite(&v_next) || !linalg::all_finite(&theta_next) {
            if tolerate {
                return Ok(Outcome::Diverged);
            }
            return Err(Error::Diverged { step: k });
        }
        visit(k, &theta, &v, &draw, &v_next)?;
        v = v_next;
        theta = theta_next;
    }
    Ok(Outcome::Finished)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma7Report {
    pub noise: &'static str,
    pub gamma: f64,
    pub gamma_r2: f64,
    /// `4σ²/λ²`.
    pub bound: f64,
    /// `max_k` of the seed-averaged `‖v_k‖²` over the bound; infinite when a
    /// seed diverged.
    pub max_ratio: f64,
    pub threshold: f64,
    pub diverged_seeds: usize,
    pub n_seeds: usize,
    pub n_steps: usize,
    pub passed: bool,
}

impl Lemma7Report {
    pub fn to_report(&self) -> Report {
        Report::new("lemma7", self.passed)
            .value("gamma", self.gamma)
            .value("gamma_r2", self.gamma_r2)
            .value("bound", self.bound)
            .value("max_ratio", self.max_ratio)
            .value("threshold", self.threshold)
            .value("diverged_seeds", self.diverged_seeds as f64)
            .value("n_seeds", self.n_seeds as f64)
            .value("n_steps", self.n_steps as f64)
            .note(format!("noise = {}", self.noise))
    }
}

/// Seed-averaged `E‖v_k‖²` against `4σ²/λ²`. Requires `γR² ≤ 1`.
#[allow(clippy::too_many_arguments)]
pub fn check_lemma7_bound(
    noise: &dyn NoiseSpec,
    constants: &NoiseConstants,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    n_steps: usize,
    n_seeds: usize,
    seed: u64,
) -> Result<Lemma7Report> {
    require_stable(gamma, constants.r2)?;
    lemma7(
        noise, constants, theta0, gamma, delta_t, n_steps, n_seeds, seed, false,
    )
}

/// Same estimate without the `γR² ≤ 1` precondition; divergent seeds make
/// the ratio infinite. Used as a negative control.
#[allow(clippy::too_many_arguments)]
pub fn check_lemma7_bound_unchecked(
    noise: &dyn NoiseSpec,
    constants: &NoiseConstants,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    n_steps: usize,
    n_seeds: usize,
    seed: u64,
) -> Result<Lemma7Report> {
    lemma7(
        noise, constants, theta0, gamma, delta_t, n_steps, n_seeds, seed, true,
    )
}

#[allow(clippy::too_many_arguments)]
fn lemma7(
    noise: &dyn NoiseSpec,
    constants: &NoiseConstants,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    n_steps: usize,
    n_seeds: usize,
    seed: u64,
    tolerate: bool,
) -> Result<Lemma7Report> {
    if n_seeds == 0 || n_steps == 0 {
        return Err(Error::InvalidParameter(
            "lemma 7 check needs seeds and steps".into(),
        ));
    }
    let bound = 4.0 * constants.sigma2 / (constants.lambda * constants.lambda);
    let mut sums = vec![0.0; n_steps];
    let mut diverged = 0;
    for i in 0..n_seeds {
        let mut r = rng::stream(rng::split_seed(seed, i as u64), rng::DATA_STREAM);
        let outcome = iterate(
            noise,
            theta0,
            gamma,
            delta_t,
            n_steps,
            &mut r,
            tolerate,
            |k, _, _, _, v| {
                sums[k - 1] += v.norm_squared();
                Ok(())
            },
        )?;
        if let Outcome::Diverged = outcome {
            diverged += 1;
        }
    }
    let max_mean = sums.iter().fold(0.0f64, |m, s| m.max(s / n_seeds as f64));
    let max_ratio = if diverged > 0 {
        f64::INFINITY
    } else if bound == 0.0 {
        if max_mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        max_mean / bound
    };
    let threshold = mc_threshold(n_seeds);
    Ok(Lemma7Report {
        noise: noise.name(),
        gamma,
        gamma_r2: gamma * constants.r2,
        bound,
        max_ratio,
        threshold,
        diverged_seeds: diverged,
        n_seeds,
        n_steps,
        passed: max_ratio <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma6Report {
    pub noise: &'static str,
    pub points: usize,
    /// Worst `λ_max(A) / R²` over the points.
    pub max_lambda_ratio: f64,
    /// Worst `‖Id − γA‖_op − (1 − γλ)` with `γ = 1/R²`.
    pub max_contraction_excess: f64,
    pub passed: bool,
}

impl Lemma6Report {
    pub fn to_report(&self) -> Report {
        Report::new("lemma6", self.passed)
            .value("points", self.points as f64)
            .value("max_lambda_ratio", self.max_lambda_ratio)
            .value("max_contraction_excess", self.max_contraction_excess)
            .note(format!("noise = {}", self.noise))
    }
}

/// At each point: `R²` estimated from `n_draws` draws, `λ` the smallest
/// eigenvalue of `A(θ)` and `γ = 1/R²`; checks `λ_max(A) ≤ R²` (with
/// Monte-Carlo slack) and `‖Id − γA‖_op ≤ 1 − γλ`.
pub fn check_lemma6(
    noise: &dyn NoiseSpec,
    thetas: &[ParamVector],
    n_draws: usize,
    seed: u64,
) -> Result<Lemma6Report> {
    if thetas.is_empty() {
        return Err(Error::InvalidParameter(
            "lemma 6 check needs at least one point".into(),
        ));
    }
    let mut r = rng::stream(seed, rng::AUX_STREAM);
    let mut worst_ratio = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    for theta in thetas {
        let r2 = noise.r2_at(theta, n_draws, &mut r)?;
        let a = linalg::symmetrize(&noise.mean_matrix(theta)?);
        let eigs = linalg::symmetric_eigenvalues(&a);
        let (lo, hi) = (eigs[0], eigs[eigs.len() - 1]);
        let gamma = 1.0 / r2;
        let d = a.nrows();
        let op = linalg::symmetric_op_norm(&(DMatrix::identity(d, d) - &a * gamma));
        worst_ratio = worst_ratio.max(hi / r2);
        worst_excess = worst_excess.max(op - (1.0 - gamma * lo));
    }
    Ok(Lemma6Report {
        noise: noise.name(),
        points: thetas.len(),
        max_lambda_ratio: worst_ratio,
        max_contraction_excess: worst_excess,
        passed: worst_ratio <= 1.0 + MC_TOLERANCE && worst_excess <= CONTRACTION_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma11Report {
    pub steps: usize,
    /// `sup_k ‖B_k − A_k⁻¹‖_op`.
    pub sup_deviation: f64,
    /// `‖A_n B_n − Id‖_max`.
    pub terminal_residual: f64,
    /// Worst entry of the one-step identity
    /// `B_{k−1} − A_{k−1}⁻¹ = (B_k − A_k⁻¹)(Id − γA_k) + A_k⁻¹ − A_{k−1}⁻¹`.
    pub max_identity_residual: f64,
}

/// Builds `B_n = A_n⁻¹`, `B_{k−1} = B_k + γ(Id − B_k A_k)` backward over
/// `a = [A_1, …, A_n]`.
pub fn check_lemma11_bmatrix(a: &[DMatrix<f64>], gamma: f64) -> Result<Lemma11Report> {
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "lemma 11 check needs a nonempty sequence".into(),
        ));
    }
    let d = a[0].nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let inverse = |m: &DMatrix<f64>| linalg::spd_solve_matrix(m, &id, linalg::MIN_EIGENVALUE);

    let mut inv_k = inverse(&a[n - 1])?;
    let mut b_k = inv_k.clone();
    let terminal_residual = (&a[n - 1] * &b_k - &id).amax();
    let mut sup = linalg::op_norm(&(&b_k - &inv_k));
    let mut worst_identity = 0.0f64;
    for k in (2..=n).rev() {
        let a_k = &a[k - 1];
        let inv_prev = inverse(&a[k - 2])?;
        let b_prev = &b_k + (&id - &b_k * a_k) * gamma;
        let lhs = &b_prev - &inv_prev;
        let rhs = (&b_k - &inv_k) * (&id - a_k * gamma) + &inv_k - &inv_prev;
        worst_identity = worst_identity.max((&lhs - rhs).amax());
        sup = sup.max(linalg::op_norm(&lhs));
        b_k = b_prev;
        inv_k = inv_prev;
    }
    Ok(Lemma11Report {
        steps: n,
        sup_deviation: sup,
        terminal_residual,
        max_identity_residual: worst_identity,
    })
}

/// Metrics `A_k = (1−δt) J(θ_{k−1}) + (δt/γ) Id` along a fixed-γ TANGO run
/// of `⌈T/δt⌉` steps.
#[allow(clippy::too_many_arguments)]
pub fn tango_metric_sequence<M: Model + ?Sized>(
    model: &M,
    dataset: &Dataset,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    horizon: f64,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    let n = ceil_ratio(horizon, delta_t);
    let d = model.param_dim();
    let id = DMatrix::<f64>::identity(d, d);
    let policy = GammaPolicy::fixed(gamma);
    let mut data = rng::stream(seed, rng::DATA_STREAM);
    let mut pseudo = rng::stream(seed, rng::PSEUDO_STREAM);
    let mut state = OptimizerState::new(theta0.clone());
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let j = model
            .exact_fisher(&state.theta, dataset)
            .map_err(|e| e.at_step(k))?;
        out.push(j.into_inner() * (1.0 - delta_t) + &id * (delta_t / gamma));
        let s = dataset.draw(&mut data);
        tango_step(
            &mut state,
            model,
            s,
            delta_t,
            delta_t,
            &policy,
            PseudoVariant::Sampled,
            &mut pseudo,
        )
        .map_err(|e| e.at_step(k))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma11Study {
    pub delta_ts: Vec<f64>,
    pub sup_deviations: Vec<f64>,
    pub slope: f64,
    pub max_identity_residual: f64,
    pub passed: bool,
}

impl Lemma11Study {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new("lemma11", self.passed)
            .value("slope", self.slope)
            .value("min_slope", LEMMA11_MIN_SLOPE)
            .value("max_identity_residual", self.max_identity_residual);
        for (dt, dev) in self.delta_ts.iter().zip(&self.sup_deviations) {
            r = r.value(&format!("sup_deviation@{dt:e}"), *dev);
        }
        r
    }
}

/// B-matrix deviation of a TANGO trajectory at each `δt`, its log-log slope,
/// and the one-step identity on every trajectory.
#[allow(clippy::too_many_arguments)]
pub fn lemma11_study<M: Model + ?Sized>(
    model: &M,
    dataset: &Dataset,
    theta0: &ParamVector,
    gamma: f64,
    delta_ts: &[f64],
    horizon: f64,
    seed: u64,
) -> Result<Lemma11Study> {
    let mut devs = Vec::with_capacity(delta_ts.len());
    let mut worst_identity = 0.0f64;
    for &dt in delta_ts {
        let a = tango_metric_sequence(model, dataset, theta0, gamma, dt, horizon, seed)?;
        let lambda = a
            .iter()
            .map(linalg::min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        if !(gamma * lambda < 1.0) {
            return Err(Error::Precondition(format!(
                "gamma * lambda = {} is not below 1",
                gamma * lambda
            )));
        }
        let rep = check_lemma11_bmatrix(&a, gamma)?;
        worst_identity = worst_identity.max(rep.max_identity_residual);
        devs.push(rep.sup_deviation);
    }
    let slope = fit_loglog_slope(delta_ts, &devs)?;
    Ok(Lemma11Study {
        delta_ts: delta_ts.to_vec(),
        sup_deviations: devs,
        slope,
        max_identity_residual: worst_identity,
        passed: slope >= LEMMA11_MIN_SLOPE && worst_identity <= LEMMA11_IDENTITY_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    /// Seed average of `Σ_j ‖F̂_j − F_j‖²`.
    pub xi_sum: f64,
    /// `nσ²`.
    pub xi_bound: f64,
    /// Seed average of `Σ_j ‖(Â_j − A_j) v_{j−1}‖²`.
    pub zeta_sum: f64,
    /// `4nR²λ_maxσ²/λ²`.
    pub zeta_bound: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl MartingaleReport {
    pub fn to_report(&self) -> Report {
        Report::new("martingale", self.passed)
            .value("xi_sum", self.xi_sum)
            .value("xi_bound", self.xi_bound)
            .value("zeta_sum", self.zeta_sum)
            .value("zeta_bound", self.zeta_bound)
            .value("threshold", self.threshold)
    }
}

/// Empirical sums of squared martingale increments of the noisy iteration
/// against their expectation bounds. Requires `γR² ≤ 1`.
#[allow(clippy::too_many_arguments)]
pub fn check_martingale_variances(
    noise: &dyn NoiseSpec,
    constants: &NoiseConstants,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    n: usize,
    n_seeds: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    require_stable(gamma, constants.r2)?;
    if n_seeds == 0 || n == 0 {
        return Err(Error::InvalidParameter(
            "martingale check needs seeds and steps".into(),
        ));
    }
    let mut xi_total = 0.0;
    let mut zeta_total = 0.0;
    for i in 0..n_seeds {
        let mut r = rng::stream(rng::split_seed(seed, i as u64), rng::DATA_STREAM);
        iterate(
            noise,
            theta0,
            gamma,
            delta_t,
            n,
            &mut r,
            false,
            |_, theta, v_prev, draw, _| {
                let f = noise.mean_drift(theta)?;
                let a = noise.mean_matrix(theta)?;
                xi_total += (&draw.f_hat - f).norm_squared();
                zeta_total += ((&draw.a_hat - a) * v_prev).norm_squared();
                Ok(())
            },
        )?;
    }
    let c = constants;
    let xi_bound = n as f64 * c.sigma2;
    let zeta_bound = 4.0 * n as f64 * c.r2 * c.lambda_max * c.sigma2 / (c.lambda * c.lambda);
    let xi_sum = xi_total / n_seeds as f64;
    let zeta_sum = zeta_total / n_seeds as f64;
    let threshold = mc_threshold(n_seeds);
    Ok(MartingaleReport {
        xi_sum,
        xi_bound,
        zeta_sum,
        zeta_bound,
        threshold,
        passed: xi_sum <= xi_bound * threshold && zeta_sum <= zeta_bound * threshold,
    })
}
