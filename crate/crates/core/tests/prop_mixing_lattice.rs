use betamix::mixing_lattice::*;
use proptest::prelude::*;

fn dependent_model(beta0: f64) -> impl Strategy<Value = BetaMixingModel> {
    prop_oneof![
        (1u64..40).prop_map(move |m| BetaMixingModel::indicator(m).unwrap().with_beta0(beta0).unwrap()),
        (0.2f64..4.0).prop_map(move |m0| BetaMixingModel::polynomial(m0).unwrap().with_beta0(beta0).unwrap()),
    ]
}

fn model_strategy() -> impl Strategy<Value = BetaMixingModel> {
    prop_oneof![
        dependent_model(1.0),
        dependent_model(2.0),
        (1u8..3).prop_map(|b| BetaMixingModel::iid().with_beta0(b as f64).unwrap())
    ]
}

/// Sample sizes 2^a 3^b 5^c between 16 and 4096.
fn admissible_n() -> impl Strategy<Value = u64> {
    (0u32..13, 0u32..8, 0u32..6)
        .prop_map(|(a, b, c)| 2u64.pow(a) * 3u64.pow(b) * 5u64.pow(c))
        .prop_filter("in range", |n| (16..=4096).contains(n))
}

/// Smallest i ≥ 0 with β(i) < v, found by direct search.
fn beta_inverse(model: &BetaMixingModel, v: f64, cap: u64) -> u64 {
    (0..=cap).find(|&i| beta_coeff(model, i) < v).unwrap_or(cap + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mu_monotone_in_q_and_u(model in model_strategy(), q in 0u64..60, u in 0.001f64..1.0, v in 0.001f64..1.0) {
        prop_assert!(mu_q(&model, q, u).unwrap() <= mu_q(&model, q + 1, u).unwrap());
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        prop_assert!(mu_q(&model, q, hi).unwrap() <= mu_q(&model, q, lo).unwrap());
    }

    #[test]
    fn mu_sandwich_with_inverse_beta(model in model_strategy(), q in 0u64..60, u in 0.001f64..1.0) {
        let mu = mu_q(&model, q, u).unwrap();
        let inv = beta_inverse(&model, 2.0 * u, q + 2);
        prop_assert!(inv.min(q + 1) <= mu);
        prop_assert!(mu <= (inv + 1).min(q + 1));
    }

    #[test]
    fn dep_norm_monotone_and_bounded(
        model in dependent_model(1.0),
        sample in prop::collection::vec(0.0f64..10.0, 5..60),
        q in 1u64..30,
        r in prop::sample::select(vec![2.5, 3.0, 4.0, 8.0]),
    ) {
        let f = QuantileFn::empirical(&sample).unwrap();
        let a = dep_norm(&f, &model, q).unwrap();
        let b = dep_norm(&f, &model, q + 3).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-10) + 1e-12);
        let upper = b_r_bounds(&model, q, r).unwrap().1;
        prop_assert!(a <= upper * lr_norm(&f, r).unwrap() * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn q_nk_non_increasing(model in model_strategy(), n in admissible_n(), k in 0u32..12) {
        let lattice = build_lattice(n, 3).unwrap();
        prop_assert!(q_nk(&model, &lattice, k + 1) <= q_nk(&model, &lattice, k));
    }

    #[test]
    fn effective_n_inside_bounds(
        model in dependent_model(1.0),
        n in admissible_n(),
        r in prop::sample::select(vec![2.5, 3.0, 4.0, 8.0]),
    ) {
        let lattice = build_lattice(n, 3).unwrap();
        let eff = effective_n(&model, &lattice, r).unwrap();
        let (lo, hi) = effective_n_bounds(&model, &lattice, r).unwrap();
        prop_assert!(lo <= eff.value * (1.0 + 1e-10) && eff.value <= hi * (1.0 + 1e-10), "{lo} {} {hi}", eff.value);
        let b = b_r_exact(&model, eff.q_n0, r).unwrap();
        let lhs = eff.value * b * b;
        let rhs = 2f64.powf(2.0 / r) * n as f64;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn iid_effective_n(n in admissible_n(), r in 2.05f64..20.0) {
        let lattice = build_lattice(n, 3).unwrap();
        let one = effective_n(&BetaMixingModel::iid(), &lattice, r).unwrap().value;
        prop_assert!((one - n as f64).abs() <= 1e-10 * n as f64);
        let two = effective_n(&BetaMixingModel::iid().with_beta0(2.0).unwrap(), &lattice, r).unwrap().value;
        prop_assert!(two > n as f64 / 2.0 && two < n as f64);
    }
}

/// With β(0) = 2 the extra unit of μ on (1/2, 1] pushes n(β) just below the
/// closed-form lower bound.
#[test]
fn closed_form_lower_bound_assumes_unit_beta0() {
    let lattice = build_lattice(45, 3).unwrap();
    let model = BetaMixingModel::indicator(16).unwrap().with_beta0(2.0).unwrap();
    let exact = effective_n(&model, &lattice, 2.5).unwrap().value;
    let (lo, _) = effective_n_bounds(&model, &lattice, 2.5).unwrap();
    assert!(exact < lo);
    assert!((lo - exact) / lo < 1e-6);
}
