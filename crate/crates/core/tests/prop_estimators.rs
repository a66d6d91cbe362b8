use betamix::estimators::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_problem(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * DVector::from_fn(d, |j, _| 1.0 / (j + 1) as f64) + noise;
    (x, y)
}

fn penalty() -> impl Strategy<Value = PenaltySpec> {
    prop_oneof![
        Just(PenaltySpec::none()),
        (0.001f64..0.5).prop_map(PenaltySpec::l1),
        (0.0f64..3.0, 0.001f64..0.5).prop_map(|(m, l)| PenaltySpec::weighted_l2(m, l)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fit_is_a_near_minimizer(
        n in 20usize..120,
        d in 1usize..5,
        tau in 0.1f64..0.9,
        pen in penalty(),
        seed in any::<u64>(),
    ) {
        let (x, y) = random_problem(n, d, seed);
        let opts = SolverOptions::default();
        let loss = LossSpec::Quantile { tau };
        let fit = fit_penalized(&x, &y, loss, pen, &opts).unwrap();
        prop_assert!(fit.optimality_residual <= opts.tol);
        let at_fit = empirical_criterion(loss, pen, &x, &y, &fit.theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in 0..40 {
            let scale = if i < 20 { 1e-3 } else { 1.0 };
            let probe = &fit.theta + DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let value = empirical_criterion(loss, pen, &x, &y, &probe).unwrap();
            prop_assert!(at_fit <= value + opts.tol, "{at_fit} > {value}");
        }
    }

    #[test]
    fn squared_fit_is_a_near_minimizer(n in 10usize..80, d in 1usize..5, pen in penalty(), seed in any::<u64>()) {
        let (x, y) = random_problem(n, d, seed);
        let opts = SolverOptions::default();
        let fit = fit_penalized(&x, &y, LossSpec::Squared, pen, &opts).unwrap();
        let at_fit = empirical_criterion(LossSpec::Squared, pen, &x, &y, &fit.theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let probe = &fit.theta + DVector::from_fn(d, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
            prop_assert!(at_fit <= empirical_criterion(LossSpec::Squared, pen, &x, &y, &probe).unwrap() + opts.tol);
        }
    }

    #[test]
    fn delta_p_zero_on_diagonal_and_nonnegative(
        d in 1usize..6,
        tau in 0.05f64..0.95,
        a in prop::collection::vec(-3.0f64..3.0, 6),
        b in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let pop = LinearPopulation::block_gaussian(d);
        let ta = DVector::from_column_slice(&a[..d]);
        let tb = DVector::from_column_slice(&b[..d]);
        for loss in [LossSpec::Quantile { tau }, LossSpec::AbsoluteHalf, LossSpec::Squared] {
            prop_assert_eq!(delta_p(&pop, loss, &ta, &ta).unwrap(), 0.0);
            prop_assert!(delta_p(&pop, loss, &ta, &tb).unwrap() >= 0.0);
        }
    }

    #[test]
    fn squared_delta_p_is_mahalanobis(
        d in 1usize..5,
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        a in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let l = DMatrix::from_fn(d, d, |i, j| entries[i * 4 + j]);
        let sigma = &l * l.transpose() + DMatrix::identity(d, d);
        let pop = LinearPopulation { sigma_x: sigma.clone(), error_var: 1.0, error_law: ErrorLaw::Gaussian };
        let delta = DVector::from_column_slice(&a[..d]);
        let zero = DVector::zeros(d);
        let expected = (delta.transpose() * &sigma * &delta)[0].sqrt();
        let got = delta_p(&pop, LossSpec::Squared, &delta, &zero).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn sieve_fit_solves_normal_equations(
        kind in prop_oneof![Just(SieveKind::Polynomial), Just(SieveKind::PSpline)],
        k in 3usize..9,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..300).map(|_| rng.random_range(-6.0..6.0)).collect();
        let y = DVector::from_fn(300, |i, _| (2.0 * w[i].cos() + w[i]) + rng.sample::<f64, _>(StandardNormal));
        let basis = SieveBasis::new(kind, k).unwrap();
        let fit = fit_sieve_ls(basis, &w, &y).unwrap();
        let q = basis.design(&w);
        let gram = q.transpose() * &q;
        let rhs = q.transpose() * &y;
        let resid = (&gram * &fit.theta - &rhs).norm();
        prop_assert!(resid <= 1e-8 * (gram.norm() * fit.theta.norm()).max(rhs.norm()));
    }
}
