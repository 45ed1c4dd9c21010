use super::*;
use crate::models::data::DatasetGenerator;
use crate::models::{Dataset, GaussianModel, LinearRegression, Sample};
use crate::optimizers::GammaPolicy;
use crate::reference::LinearFlow;
use nalgebra::{dmatrix, dvector, DMatrix};
use rand::Rng;

fn gaussian_data(mean: f64, size: usize) -> Dataset {
    DatasetGenerator::Gaussian { mean, std: 1.0 }
        .generate(size, 1)
        .unwrap()
}

fn linear_data() -> Dataset {
    DatasetGenerator::Linear {
        theta: vec![1.0, -0.5],
        noise_std: 1.0,
        intercept: true,
    }
    .generate(200, 4)
    .unwrap()
}

#[test]
fn slope_of_a_power_law() {
    let xs = [1e-2, 1e-3, 1e-4];
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * libm::sqrt(*x)).collect();
    assert!((fit_loglog_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    assert!(fit_loglog_slope(&xs, &[1.0, 0.0, 1.0]).is_err());
    assert!(fit_loglog_slope(&[1.0], &[1.0]).is_err());
    assert!((mc_threshold(100) - 1.3).abs() < 1e-15);
}

#[test]
fn prop2_lockstep_on_linear_regression() {
    let model = LinearRegression::with_unit_noise(2);
    let ds = linear_data();
    let mut r = crate::rng::stream(77, 2);
    for _ in 0..20 {
        let gamma = 10f64.powf(r.random_range(-3.0..-1.5));
        let dt = 10f64.powf(r.random_range(-3.0..-1.0));
        let seed: u64 = r.random();
        let rep =
            check_prop2_equivalence(&model, &ds, &dvector![0.5, 0.5], gamma, dt, 1e4 * dt, seed)
                .unwrap();
        assert_eq!(rep.steps, 10_000);
        assert!(rep.passed, "{rep:?}");
    }
}

#[test]
fn prop2_rejects_non_quadratic_models() {
    let ds = gaussian_data(0.0, 10);
    let err = check_prop2_equivalence(&GaussianModel, &ds, &dvector![0.0, 0.0], 0.01, 0.1, 1.0, 1)
        .unwrap_err();
    assert!(matches!(err, Error::UnsupportedModel { .. }));
}

#[test]
fn lemma7_identity_noise_sits_at_a_quarter() {
    let f = dvector![3.0, -4.0];
    let noise = IdentityNoise { f: f.clone() };
    let c = estimate_constants(&noise, &[dvector![0.0, 0.0]], 10, 1).unwrap();
    assert_eq!((c.sigma2, c.lambda, c.r2), (25.0, 1.0, 1.0));
    let rep = check_lemma7_bound(&noise, &c, &dvector![0.0, 0.0], 1.0, 0.0, 50, 3, 1).unwrap();
    assert_eq!(rep.max_ratio, 0.25);
    assert!(rep.passed);
}

#[test]
fn lemma7_directional_probe_approaches_a_quarter() {
    let noise = DirectionalProbe::new(dvector![0.5, 2.0], 1.5).unwrap();
    let c = estimate_constants(&noise, &[dvector![0.0, 0.0]], 1, 1).unwrap();
    let gamma = 1.0 / c.r2;
    let rep = check_lemma7_bound(&noise, &c, &dvector![0.0, 0.0], gamma, 0.0, 2000, 1, 1).unwrap();
    assert!((rep.max_ratio - 0.25).abs() < 1e-9, "{rep:?}");
}

#[test]
fn lemma7_precondition_and_negative_control() {
    let noise = IdentityNoise { f: dvector![1.0] };
    let c = estimate_constants(&noise, &[dvector![0.0]], 1, 1).unwrap();
    let err = check_lemma7_bound(&noise, &c, &dvector![0.0], 4.0, 0.0, 10, 1, 1).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
    let rep =
        check_lemma7_bound_unchecked(&noise, &c, &dvector![0.0], 4.0, 0.0, 1000, 1, 1).unwrap();
    assert!(!rep.passed);
}

#[test]
fn lemma7_tango_noise_on_gaussian() {
    let ds = gaussian_data(1.0, 500);
    let theta0 = dvector![0.0, 0.0];
    let probe = TangoNoise::new(&GaussianModel, &ds, 0.01, 1e-3).unwrap();
    let pilot = pilot_checkpoints(&probe, &theta0, 0.01, 1e-3, 1000, 10, 3).unwrap();
    let fisher_r2 = estimate_constants(&FisherNoise::new(&GaussianModel, &ds), &pilot, R2_DRAWS, 3)
        .unwrap()
        .r2;
    let gamma = 1.0 / fisher_r2;
    let noise = TangoNoise::new(&GaussianModel, &ds, gamma, 1e-3).unwrap();
    let c = estimate_constants(&noise, &pilot, R2_DRAWS, 3).unwrap();
    let rep = check_lemma7_bound(&noise, &c, &theta0, gamma, 1e-3, 1000, 1000, 5).unwrap();
    assert!(rep.passed, "{rep:?}");

    let frozen = TangoNoise::new(&GaussianModel, &ds, 4.0 / fisher_r2, 0.0).unwrap();
    let neg = check_lemma7_bound_unchecked(&frozen, &c, &theta0, 4.0 / fisher_r2, 0.0, 1000, 50, 5)
        .unwrap();
    assert!(!neg.passed);
}

#[test]
fn lemma6_examples() {
    let id = IdentityNoise { f: dvector![1.0] };
    let rep = check_lemma6(&id, &[dvector![0.0]], 10, 1).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.max_contraction_excess, 0.0);

    let ds = gaussian_data(0.0, 100);
    let noise = FisherNoise::new(&GaussianModel, &ds);
    let r2 = noise
        .r2_at(&dvector![0.0, 0.0], R2_DRAWS, &mut crate::rng::stream(1, 2))
        .unwrap();
    assert!(2.0 <= r2);
    let rep = check_lemma6(
        &noise,
        &[dvector![0.0, 0.0], dvector![3.0, -0.5], dvector![-1.0, 1.0]],
        R2_DRAWS,
        1,
    )
    .unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn lemma6_contraction_matches_eigenvalues_of_random_spd() {
    let mut r = crate::rng::stream(5, 2);
    for _ in 0..20 {
        let q = DMatrix::from_fn(3, 3, |_, _| r.random_range(-1.0..1.0))
            .qr()
            .q();
        let eig = dvector![r.random_range(0.1..1.0), r.random_range(1.0..3.0), 4.0];
        let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let a = crate::linalg::symmetrize(&a);
        let lambda = eig.min();
        let gamma = 1.0 / eig.max();
        let op = crate::linalg::symmetric_op_norm(&(DMatrix::identity(3, 3) - &a * gamma));
        assert!((op - (1.0 - gamma * lambda)).abs() <= 1e-12);
    }
}

#[test]
fn lemma11_constant_metric() {
    let dyadic = vec![dmatrix![2.0, 0.0; 0.0, 4.0]; 500];
    let rep = check_lemma11_bmatrix(&dyadic, 0.2).unwrap();
    assert_eq!(rep.sup_deviation, 0.0);
    let general = vec![dmatrix![2.0, 0.3; 0.3, 1.0]; 500];
    let rep = check_lemma11_bmatrix(&general, 0.2).unwrap();
    assert!(rep.sup_deviation <= 1e-12, "{rep:?}");
    assert!(rep.terminal_residual <= 1e-12);
}

#[test]
fn lemma11_identity_on_a_varying_sequence() {
    let a: Vec<DMatrix<f64>> = (0..300)
        .map(|k| {
            let t = k as f64 * 0.01;
            dmatrix![2.0 + libm::sin(t), 0.2 * t; 0.2 * t, 1.0 + t]
        })
        .collect();
    let rep = check_lemma11_bmatrix(&a, 0.1).unwrap();
    assert!(rep.max_identity_residual <= LEMMA11_IDENTITY_TOLERANCE);
    assert!(rep.sup_deviation > 0.0);
}

#[test]
fn lemma11_gaussian_slope() {
    let ds = DatasetGenerator::Gaussian {
        mean: 1.0,
        std: 0.7,
    }
    .generate(200, 1)
    .unwrap();
    let theta0 = dvector![0.0, libm::log(0.7)];
    for seed in [7, 8, 9] {
        let study = lemma11_study(
            &GaussianModel,
            &ds,
            &theta0,
            0.024,
            &[1e-2, 1e-3, 1e-4],
            1.0,
            seed,
        )
        .unwrap();
        assert!(study.passed, "{study:?}");
    }
}

#[test]
fn martingale_sums() {
    let noise = IdentityNoise {
        f: dvector![1.0, 2.0],
    };
    let c = estimate_constants(&noise, &[dvector![0.0, 0.0]], 1, 1).unwrap();
    let rep =
        check_martingale_variances(&noise, &c, &dvector![0.0, 0.0], 0.5, 0.01, 100, 2, 1).unwrap();
    assert_eq!((rep.xi_sum, rep.zeta_sum), (0.0, 0.0));
    assert!(rep.passed);

    let model = LinearRegression::with_unit_noise(2);
    let ds = linear_data();
    let theta0 = dvector![0.0, 0.0];
    let fisher = FisherNoise::new(&model, &ds);
    let pilot = pilot_checkpoints(&fisher, &theta0, 0.01, 1e-2, 1000, 10, 2).unwrap();
    let gamma = 1.0 / estimate_constants(&fisher, &pilot, R2_DRAWS, 2).unwrap().r2;
    let noise = TangoNoise::new(&model, &ds, gamma, 1e-2).unwrap();
    let c = estimate_constants(&noise, &pilot, R2_DRAWS, 2).unwrap();
    let rep = check_martingale_variances(&noise, &c, &theta0, gamma, 1e-2, 1000, 100, 3).unwrap();
    assert!(rep.passed);
}

#[test]
fn prop4_rate() {
    let field = LinearFlow::new(
        dmatrix![2.0, 0.3; 0.3, 1.0],
        dmatrix![1.0, 0.2; -0.2, 0.5],
        dvector![1.0, -1.0],
    )
    .unwrap();
    let res = prop4_rate_study(&field, &dvector![1.0, 1.0], 0.4, &[1e-2, 1e-3, 1e-4], 1.0).unwrap();
    assert!(res.slope_within(PROP4_SLOPE));
    assert!(res.strictly_monotone());
}

#[test]
fn tango_rate() {
    let ds = gaussian_data(2.0, 200);
    let gamma = GammaPolicy::fixed(0.02);
    let res = tango_rate_study(
        &GaussianModel,
        &ds,
        &dvector![0.0, 0.0],
        &gamma,
        &[1e-2, 1e-3, 1e-4],
        1.0,
        20,
        9,
    )
    .unwrap();
    assert!(res.slope_within(TANGO_SLOPE), "{res:?}");
    assert!(res.strictly_monotone(), "{res:?}");
    assert!(res.cells.iter().all(|c| c.diverged == 0));
}

#[test]
fn rate_study_is_deterministic() {
    let ds = gaussian_data(2.0, 50);
    let gamma = GammaPolicy::fixed(0.02);
    let a = tango_rate_study(
        &GaussianModel,
        &ds,
        &dvector![0.0, 0.0],
        &gamma,
        &[1e-2, 1e-2, 1e-3],
        0.5,
        5,
        9,
    )
    .unwrap();
    let b = tango_rate_study(
        &GaussianModel,
        &ds,
        &dvector![0.0, 0.0],
        &gamma,
        &[1e-2, 1e-2, 1e-3],
        0.5,
        5,
        9,
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.endpoint_errors[0], a.endpoint_errors[1]);
}

#[test]
fn fixed_point_closed_form() {
    let model = LinearRegression::with_unit_noise(1);
    let ds = Dataset::new(vec![Sample::new(vec![1.0], 1.0)]).unwrap();
    let rep = check_frozen_fixed_point(
        &model,
        &ds,
        &dvector![0.0],
        &GammaPolicy::MaxNorm,
        100_000,
        1,
    )
    .unwrap();
    assert!((rep.target[0] + 1.0).abs() < 1e-15);
    assert!(rep.passed);
}

#[test]
fn fixed_point_whitened_inputs() {
    let model = LinearRegression::with_unit_noise(2);
    let r2 = libm::sqrt(2.0);
    let ds = Dataset::new(vec![
        Sample::new(vec![r2, 0.0], 1.0),
        Sample::new(vec![0.0, r2], -2.0),
    ])
    .unwrap();
    let theta = dvector![0.3, 0.1];
    let rep =
        check_frozen_fixed_point(&model, &ds, &theta, &GammaPolicy::MaxNorm, 100_000, 1).unwrap();
    let g = crate::models::expected_gradient(&model, &theta, &ds).unwrap();
    assert!((&rep.target - g).amax() < 1e-14);
    assert!(rep.passed);
}

#[test]
fn fixed_point_gaussian() {
    for mean in [10.0, 1.0] {
        let ds = gaussian_data(mean, 1000);
        let theta = dvector![0.0, 0.0];
        let rep = check_frozen_fixed_point(
            &GaussianModel,
            &ds,
            &theta,
            &GammaPolicy::MaxNorm,
            100_000,
            1,
        )
        .unwrap();
        let g = crate::models::expected_gradient(&GaussianModel, &theta, &ds).unwrap();
        assert!((&rep.target - dvector![g[0], g[1] / 2.0]).amax() < 1e-12);
        assert!(rep.passed, "mean {mean}: {rep:?}");
    }
}
