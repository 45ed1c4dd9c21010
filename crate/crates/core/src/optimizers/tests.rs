use super::*;
use crate::models::data::DatasetGenerator;
use crate::models::{
    mc_fisher, BuiltinModel, Dataset, FisherMatrix, GaussianModel, LinearRegression, Model, Sample,
    SoftmaxRegression,
};
use crate::rng;
use nalgebra::{dmatrix, dvector, DMatrix};
use proptest::prelude::*;

fn linear_dataset() -> Dataset {
    DatasetGenerator::Linear {
        theta: vec![1.0, -0.5],
        noise_std: 0.5,
        intercept: true,
    }
    .generate(200, 4)
    .unwrap()
}

fn gaussian_dataset() -> Dataset {
    DatasetGenerator::Gaussian {
        mean: 10.0,
        std: 1.0,
    }
    .generate(1000, 1)
    .unwrap()
}

fn softmax_setup() -> (BuiltinModel, Dataset, ParamVector) {
    let ds = DatasetGenerator::Softmax {
        classes: 3,
        input_dim: 2,
        weights: vec![0.5, 1.0, -0.5, -1.0],
    }
    .generate(300, 2)
    .unwrap();
    (
        BuiltinModel::Softmax(SoftmaxRegression::new(3, 2).unwrap()),
        ds,
        DVector::zeros(4),
    )
}

fn all_models() -> Vec<(BuiltinModel, Dataset, ParamVector)> {
    vec![
        (
            BuiltinModel::Gaussian(GaussianModel),
            gaussian_dataset(),
            dvector![0.0, 0.0],
        ),
        (
            BuiltinModel::Linear(LinearRegression::with_unit_noise(2)),
            linear_dataset(),
            dvector![0.0, 0.0],
        ),
        softmax_setup(),
    ]
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn assert_bitwise(a: &TrajectoryRecord, b: &TrajectoryRecord) {
    assert_eq!(a.rows.len(), b.rows.len());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.step, rb.step);
        assert_eq!(bits(&ra.theta), bits(&rb.theta), "step {}", ra.step);
    }
}

#[test]
fn velocity_by_hand() {
    let v = tango_velocity(
        &dvector![0.5],
        &dvector![3.0],
        &dvector![1.0],
        &dvector![1.0],
        0.1,
        0.01,
        1,
    );
    assert!((v[0] - 0.4755).abs() < 1e-15);
    let theta = 2.0 - 0.1 * v[0];
    assert!((theta - 1.95245).abs() < 1e-15);
}

#[test]
fn minibatch_velocity_by_hand() {
    let v = tango_velocity(
        &dvector![0.5],
        &dvector![3.0],
        &dvector![1.0],
        &dvector![1.0],
        0.1,
        0.01,
        2,
    );
    assert!((v[0] - 0.471).abs() < 1e-15);
}

#[test]
fn preconditioned_velocity_by_hand() {
    // C = 2: Cg = 6, Cg̃ = 2.
    let v = tango_velocity(
        &dvector![0.5],
        &dvector![6.0],
        &dvector![1.0],
        &dvector![2.0],
        0.1,
        0.01,
        1,
    );
    assert!((v[0] - 0.501).abs() < 1e-15);
}

#[test]
fn first_step_is_scaled_gradient() {
    let model = GaussianModel;
    let s = Sample::output(10.0);
    let theta0 = dvector![0.0, 0.0];
    for dt_prev in [0.0, 0.3, 1.0] {
        let mut st = OptimizerState::new(theta0.clone());
        let mut r = rng::stream(1, rng::PSEUDO_STREAM);
        tango_step(
            &mut st,
            &model,
            &s,
            dt_prev,
            0.01,
            &GammaPolicy::fixed(0.02),
            PseudoVariant::Sampled,
            &mut r,
        )
        .unwrap();
        let g = model.grad_log_loss(&theta0, &[], 10.0).unwrap();
        assert!((&st.v - &g * 0.02).norm() < 1e-15);
        assert!((&st.theta - (&theta0 - &g * 0.02 * 0.01)).norm() < 1e-15);
        assert_eq!(st.k, 1);
    }
}

#[test]
fn unit_delta_t_is_sgd_bitwise_on_every_model() {
    for (model, ds, theta0) in all_models() {
        for seed in [1, 2, 3] {
            let tango = RunConfig::new(
                OptimizerSpec::tango(GammaPolicy::fixed(1e-3)),
                1.0,
                500.0,
                seed,
            );
            let sgd = RunConfig::new(OptimizerSpec::Sgd { lr: 1e-3 }, 1.0, 500.0, seed);
            let a = run(&tango, &model, &ds, &theta0).unwrap();
            let b = run(&sgd, &model, &ds, &theta0).unwrap();
            assert_eq!(a.steps, 500);
            assert_bitwise(&a, &b);
        }
    }
}

#[test]
fn batch_of_one_and_identity_preconditioner_are_plain_tango() {
    for (model, ds, theta0) in all_models() {
        let plain = run(
            &RunConfig::new(OptimizerSpec::tango(GammaPolicy::MaxNorm), 1e-2, 5.0, 9),
            &model,
            &ds,
            &theta0,
        )
        .unwrap();
        let explicit = RunConfig::new(
            OptimizerSpec::Tango {
                gamma: GammaPolicy::MaxNorm,
                variant: PseudoVariant::Sampled,
                batch_size: 1,
                preconditioner: PreconditionerSpec::Identity,
            },
            1e-2,
            5.0,
            9,
        );
        assert_bitwise(&plain, &run(&explicit, &model, &ds, &theta0).unwrap());
    }
}

#[test]
fn step_functions_agree_bitwise() {
    let model = LinearRegression::with_unit_noise(2);
    let ds = linear_dataset();
    let gamma = GammaPolicy::fixed(0.05);
    let mut a = OptimizerState::new(dvector![0.3, -0.1]);
    let mut b = a.clone();
    let mut c = a.clone();
    let mut ra = rng::stream(5, 1);
    let mut rb = rng::stream(5, 1);
    let mut rc = rng::stream(5, 1);
    let mut id = Preconditioner::Identity;
    for k in 0..200 {
        let s = ds.get(k % ds.len());
        tango_step(
            &mut a,
            &model,
            s,
            0.05,
            0.05,
            &gamma,
            PseudoVariant::Sampled,
            &mut ra,
        )
        .unwrap();
        tango_minibatch_step(
            &mut b,
            &model,
            &[s],
            0.05,
            0.05,
            &gamma,
            PseudoVariant::Sampled,
            &mut rb,
        )
        .unwrap();
        preconditioned_tango_step(
            &mut c,
            &model,
            s,
            0.05,
            0.05,
            &gamma,
            PseudoVariant::Sampled,
            &mut id,
            &mut rc,
        )
        .unwrap();
        assert_eq!(bits(a.theta.as_slice()), bits(b.theta.as_slice()));
        assert_eq!(bits(a.theta.as_slice()), bits(c.theta.as_slice()));
        assert_eq!(bits(a.v.as_slice()), bits(c.v.as_slice()));
    }
}

/// `θ = S φ` with ∂ℓ/∂φ = Sᵀ ∂ℓ/∂θ; used as the change-of-variable oracle.
#[derive(Clone)]
struct Reparameterized<M> {
    inner: M,
    s: DMatrix<f64>,
}

impl<M: Model> Model for Reparameterized<M> {
    fn name(&self) -> &'static str {
        "reparameterized"
    }
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn log_loss(&self, phi: &ParamVector, x: &[f64], y: f64) -> crate::Result<f64> {
        self.inner.log_loss(&(&self.s * phi), x, y)
    }
    fn grad_log_loss(&self, phi: &ParamVector, x: &[f64], y: f64) -> crate::Result<DVector<f64>> {
        Ok(self.s.transpose() * self.inner.grad_log_loss(&(&self.s * phi), x, y)?)
    }
    fn sample_output(
        &self,
        phi: &ParamVector,
        x: &[f64],
        rng: &mut dyn rand::RngCore,
    ) -> crate::Result<f64> {
        self.inner.sample_output(&(&self.s * phi), x, rng)
    }
}

#[test]
fn fixed_preconditioner_is_tango_on_substituted_variable() {
    let model = LinearRegression::with_unit_noise(2);
    let ds = linear_dataset();
    let m = dmatrix![2.0, 0.6; 0.6, 0.8];
    let root = crate::linalg::spd_sqrt(&m).unwrap();
    let theta0 = dvector![0.4, -0.3];
    let phi0 = crate::linalg::spd_solve(&root, &theta0, 1e-12).unwrap();
    let reparam = Reparameterized {
        inner: model.clone(),
        s: root.clone(),
    };
    let gamma = GammaPolicy::fixed(0.05);
    let mut direct = OptimizerState::new(theta0.clone());
    let mut substituted = OptimizerState::new(phi0);
    let mut c = Preconditioner::fixed(m).unwrap();
    let mut r1 = rng::stream(3, 1);
    let mut r2 = rng::stream(3, 1);
    let mut data = rng::stream(3, 0);
    for _ in 0..2000 {
        let s = ds.draw(&mut data);
        preconditioned_tango_step(
            &mut direct,
            &model,
            s,
            0.01,
            0.01,
            &gamma,
            PseudoVariant::Sampled,
            &mut c,
            &mut r1,
        )
        .unwrap();
        tango_step(
            &mut substituted,
            &reparam,
            s,
            0.01,
            0.01,
            &gamma,
            PseudoVariant::Sampled,
            &mut r2,
        )
        .unwrap();
        let mapped = &root * &substituted.theta;
        assert!((&direct.theta - mapped).amax() < 1e-8);
    }
}

proptest! {
    #[test]
    fn velocity_update_is_affine_in_previous_velocity(
        a in proptest::collection::vec(-5.0f64..5.0, 3),
        b in proptest::collection::vec(-5.0f64..5.0, 3),
        g in proptest::collection::vec(-5.0f64..5.0, 3),
        gt in proptest::collection::vec(-5.0f64..5.0, 3),
        alpha in 0.0f64..1.0,
        dt in 0.0f64..1.0,
        gamma in 1e-4f64..0.5,
    ) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let (g, gt) = (DVector::from_vec(g), DVector::from_vec(gt));
        let mix = &a * alpha + &b * (1.0 - alpha);
        let lhs = tango_velocity(&mix, &g, &gt, &gt, dt, gamma, 1);
        let rhs = tango_velocity(&a, &g, &gt, &gt, dt, gamma, 1) * alpha
            + tango_velocity(&b, &g, &gt, &gt, dt, gamma, 1) * (1.0 - alpha);
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }
}

#[test]
fn minibatch_outer_product_estimates_fisher() {
    let model = GaussianModel;
    let theta = dvector![1.0, 0.2];
    let ds = Dataset::new(vec![Sample::output(0.0)]).unwrap();
    let exact = model.exact_fisher(&theta, &ds).unwrap();
    let b = 4;
    let n = 100_000;
    let mut r = rng::stream(8, 1);
    let mut acc = DMatrix::zeros(2, 2);
    for _ in 0..n {
        let mut gt = DVector::zeros(2);
        for _ in 0..b {
            let y = model.sample_output(&theta, &[], &mut r).unwrap();
            gt += model.grad_log_loss(&theta, &[], y).unwrap();
        }
        gt /= b as f64;
        acc += &gt * gt.transpose() * b as f64;
    }
    let est = FisherMatrix::new(acc / n as f64).unwrap();
    assert!(est.relative_frobenius_error(&exact) < 0.02);
}

#[test]
fn max_norm_policy_keeps_the_update_contracting() {
    let model = GaussianModel;
    let ds = gaussian_dataset();
    let mut st = OptimizerState::new(dvector![0.0, 0.0]);
    let mut data = rng::stream(2, 0);
    let mut r = rng::stream(2, 1);
    for _ in 0..20_000 {
        let s = ds.draw(&mut data);
        let info = tango_step(
            &mut st,
            &model,
            s,
            1e-4,
            1e-4,
            &GammaPolicy::MaxNorm,
            PseudoVariant::Sampled,
            &mut r,
        )
        .unwrap();
        assert!(1.0 - info.gamma * info.effective_sq_norm >= 0.0);
    }
}

#[test]
fn outer_product_variant_uses_observed_output() {
    let model = GaussianModel;
    let s = Sample::output(2.0);
    let mut st = OptimizerState::new(dvector![0.0, 0.0]);
    st.v = dvector![0.5, -0.25];
    let mut r = rng::stream(1, 1);
    tango_step(
        &mut st,
        &model,
        &s,
        0.1,
        0.1,
        &GammaPolicy::fixed(0.01),
        PseudoVariant::OuterProduct,
        &mut r,
    )
    .unwrap();
    let g = model.grad_log_loss(&dvector![0.0, 0.0], &[], 2.0).unwrap();
    let expected = tango_velocity(&dvector![0.5, -0.25], &g, &g, &g, 0.1, 0.01, 1);
    assert_eq!(st.v, expected);
}

#[test]
fn sgd_arithmetic_and_zero_gradient() {
    let model = LinearRegression::with_unit_noise(1);
    // g = θx − y = 3 at θ = 2, x = 1, y = −1.
    let mut st = OptimizerState::new(dvector![2.0]);
    sgd_step(&mut st, &model, &Sample::new(vec![1.0], -1.0), 0.1).unwrap();
    assert!((st.theta[0] - 1.7).abs() < 1e-15);
    let mut still = OptimizerState::new(dvector![2.0]);
    sgd_step(&mut still, &model, &Sample::new(vec![1.0], 2.0), 0.1).unwrap();
    assert_eq!(still.theta[0], 2.0);
}

#[test]
fn averaged_sgd_with_unit_rate_is_fast_descent() {
    let model = LinearRegression::with_unit_noise(2);
    let ds = linear_dataset();
    let mut st = AveragedSgdState::new(dvector![0.0, 0.0]);
    let mut r = rng::stream(1, 1);
    for k in 0..50 {
        averaged_sgd_step(
            &mut st,
            &model,
            ds.get(k),
            0.05,
            1.0,
            1.0,
            AveragingNoise::None,
            &mut r,
        )
        .unwrap();
        assert_eq!(st.theta, st.theta_fast);
    }
}

#[test]
fn equivalence_noise_requires_quadratic_model() {
    let mut st = AveragedSgdState::new(dvector![0.0, 0.0]);
    let mut r = rng::stream(1, 1);
    let err = averaged_sgd_step(
        &mut st,
        &GaussianModel,
        &Sample::output(1.0),
        0.01,
        0.1,
        0.1,
        AveragingNoise::Prop2,
        &mut r,
    );
    assert!(matches!(err, Err(Error::UnsupportedModel { .. })));
}

#[test]
fn equivalence_noise_is_centered() {
    let model =
        LinearRegression::new(2, crate::models::NoiseVariance::Fixed { sigma2: 0.5 }).unwrap();
    let theta = dvector![0.3, -0.7];
    let v_prev = dvector![1.5, -2.0];
    let s = Sample::new(vec![1.0, 0.8], 0.4);
    let n = 100_000;
    let mut r = rng::stream(12, 1);
    let draws: Vec<DVector<f64>> = (0..n)
        .map(|_| prop2_noise(&model, &theta, &s, &v_prev, 0.1, &mut r).unwrap())
        .collect();
    for i in 0..2 {
        let mean = draws.iter().map(|d| d[i]).sum::<f64>() / n as f64;
        let var = draws
            .iter()
            .map(|d| (d[i] - mean) * (d[i] - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        let se = libm::sqrt(var / n as f64);
        assert!(
            mean.abs() <= 3.0 * se,
            "component {i}: mean {mean}, se {se}"
        );
    }
}

#[test]
fn natural_gradient_with_identity_fisher_is_sgd() {
    let model = LinearRegression::with_unit_noise(2);
    let r2 = libm::sqrt(2.0);
    let ds = Dataset::new(vec![
        Sample::new(vec![r2, 0.0], 1.0),
        Sample::new(vec![0.0, r2], -1.0),
    ])
    .unwrap();
    let mut a = OptimizerState::new(dvector![0.1, 0.2]);
    let mut b = a.clone();
    let mut r = rng::stream(1, 1);
    for k in 0..10 {
        let s = ds.get(k % 2);
        natural_gradient_step(&mut a, &model, s, 0.1, FisherSource::Exact, &ds, &mut r).unwrap();
        sgd_step(&mut b, &model, s, 0.1).unwrap();
        assert!((&a.theta - &b.theta).amax() < 1e-15);
    }
}

#[test]
fn natural_gradient_on_gaussian_rescales_by_fisher() {
    let ds = Dataset::new(vec![Sample::output(10.0)]).unwrap();
    let mut st = OptimizerState::new(dvector![0.0, 0.0]);
    let mut r = rng::stream(1, 1);
    natural_gradient_step(
        &mut st,
        &GaussianModel,
        ds.get(0),
        0.01,
        FisherSource::Exact,
        &ds,
        &mut r,
    )
    .unwrap();
    let c = 1.0 - 100.0;
    assert!((&st.theta - dvector![0.01 * 10.0, -0.01 * c / 2.0]).norm() < 1e-14);
}

#[test]
fn natural_gradient_detects_singular_fisher() {
    let model = LinearRegression::with_unit_noise(2);
    let ds = Dataset::new(vec![Sample::new(vec![1.0, 0.0], 1.0)]).unwrap();
    let mut st = OptimizerState::new(dvector![0.0, 0.0]);
    let mut r = rng::stream(1, 1);
    let err = natural_gradient_step(
        &mut st,
        &model,
        ds.get(0),
        0.1,
        FisherSource::Exact,
        &ds,
        &mut r,
    );
    assert!(matches!(err, Err(Error::SingularFisher { .. })));
}

#[test]
fn natural_gradient_with_monte_carlo_fisher() {
    let ds = gaussian_dataset();
    let cfg = RunConfig::new(
        OptimizerSpec::NaturalGradient {
            fisher: FisherSource::MonteCarlo { samples: 200 },
        },
        1e-2,
        1.0,
        4,
    );
    let rec = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap();
    assert!(rec.final_theta().unwrap()[0] > 3.0);
}

#[test]
fn run_single_step_and_determinism() {
    let ds = gaussian_dataset();
    let cfg = RunConfig::new(
        OptimizerSpec::tango(GammaPolicy::fixed(1e-2)),
        1e-3,
        1e-3,
        5,
    );
    let rec = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap();
    assert_eq!(rec.steps, 1);
    assert_eq!(rec.rows.len(), 1);

    let cfg =
        RunConfig::new(OptimizerSpec::tango(GammaPolicy::MaxNorm), 1e-3, 0.5, 5).record_every(7);
    let a = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap();
    let b = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.last().unwrap().step, 500);
    assert!(a.rows.windows(2).all(|w| w[0].step < w[1].step));
    for r in &a.rows {
        assert_eq!(r.t, r.step as f64 * 1e-3);
    }
}

#[test]
fn figure_one_tango_runs_without_divergence() {
    let ds = gaussian_dataset();
    let cfg = RunConfig::new(OptimizerSpec::tango(GammaPolicy::fixed(1e-2)), 1e-4, 2.0, 1)
        .record_every(1000);
    let rec = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap();
    assert_eq!(rec.steps, 20_000);
    assert!(rec
        .rows
        .iter()
        .all(|r| r.theta.iter().all(|x| x.is_finite())));
}

#[test]
fn divergence_reports_step() {
    let model = LinearRegression::with_unit_noise(2);
    let ds = DatasetGenerator::Linear {
        theta: vec![100.0, 50.0],
        noise_std: 1.0,
        intercept: false,
    }
    .generate(100, 1)
    .unwrap();
    let cfg = RunConfig::new(OptimizerSpec::Sgd { lr: 50.0 }, 1.0, 5000.0, 1);
    let err = run(&cfg, &model, &ds, &dvector![0.0, 0.0]).unwrap_err();
    assert!(
        matches!(err, Error::Diverged { step } if step > 1),
        "{err:?}"
    );
}

#[test]
fn invalid_region_error_carries_step() {
    let ds = DatasetGenerator::Gaussian {
        mean: 0.0,
        std: 1e-12,
    }
    .generate(10, 1)
    .unwrap();
    let cfg = RunConfig::new(OptimizerSpec::Sgd { lr: 0.5 }, 1.0, 200.0, 1);
    let err = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap_err();
    assert!(err.step().is_some(), "{err:?}");
}

#[test]
fn schedules() {
    assert!(StepSchedule::constant(0.0).validate().is_err());
    assert!(StepSchedule::constant(1.5).validate().is_err());
    assert_eq!(StepSchedule::constant(1e-4).steps_for(1.0).unwrap(), 10_000);
    assert_eq!(StepSchedule::constant(0.3).steps_for(1.0).unwrap(), 4);
    let seq = StepSchedule::Sequence {
        values: vec![0.5, 0.25, 0.25, 0.1],
    };
    assert_eq!(seq.steps_for(1.0).unwrap(), 3);
    assert_eq!(seq.delta_t(0), 0.5);
    assert_eq!(seq.time(2), 0.75);
    assert!(seq.steps_for(2.0).is_err());
    assert!(StepSchedule::Sequence {
        values: vec![0.5, 0.0]
    }
    .validate()
    .is_err());
}

#[test]
fn sequence_schedule_drives_the_run() {
    let ds = gaussian_dataset();
    let mut cfg = RunConfig::new(
        OptimizerSpec::tango(GammaPolicy::fixed(1e-2)),
        1e-2,
        0.03,
        5,
    );
    cfg.schedule = StepSchedule::Sequence {
        values: vec![0.01, 0.01, 0.005, 0.005, 0.1],
    };
    let rec = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap();
    assert_eq!(rec.steps, 4);
    assert!((rec.rows.last().unwrap().t - 0.03).abs() < 1e-15);
}

#[test]
fn rmsprop_and_inverse_diagonal_fisher_runs() {
    let ds = gaussian_dataset();
    for pre in [
        PreconditionerSpec::Rmsprop { rho: 0.99 },
        PreconditionerSpec::InvDiagFisher,
    ] {
        let cfg = RunConfig::new(
            OptimizerSpec::Tango {
                gamma: GammaPolicy::MaxNorm,
                variant: PseudoVariant::Sampled,
                batch_size: 1,
                preconditioner: pre,
            },
            1e-3,
            2.0,
            3,
        );
        let rec = run(&cfg, &GaussianModel, &ds, &dvector![0.0, 0.0]).unwrap();
        assert!(rec.final_theta().unwrap()[0] > 1.0);
    }
}

#[test]
fn running_mse_mode_runs() {
    let model = LinearRegression::new(2, crate::models::NoiseVariance::RunningMse { initial: 1.0 })
        .unwrap();
    let cfg = RunConfig::new(OptimizerSpec::tango(GammaPolicy::MaxNorm), 1e-2, 5.0, 3);
    let rec = run(&cfg, &model, &linear_dataset(), &dvector![0.0, 0.0]).unwrap();
    let theta = rec.final_theta().unwrap();
    assert!(
        (theta[0] - 1.0).abs() < 0.3 && (theta[1] + 0.5).abs() < 0.3,
        "{theta}"
    );
}

#[test]
fn monte_carlo_fisher_single_draw_is_rank_one() {
    let ds = gaussian_dataset();
    let mut r = rng::stream(1, 2);
    let j = mc_fisher(&GaussianModel, &dvector![0.0, 0.0], &ds, 1, &mut r).unwrap();
    assert!(j.matrix().determinant().abs() < 1e-12);
}
