use betamix::tuning_select::*;
use proptest::prelude::*;

/// Raw proxy values, a distance table indexed by (k, k') and bias values.
fn synthetic() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..9).prop_flat_map(|len| {
        (
            prop::collection::vec(0.0f64..2.0, len),
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, len), len),
            prop::collection::vec(0.0f64..3.0, len),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn feasible_proxy_below_ideal_when_ideal_is_tested((raw, dist, bias) in synthetic(), s in 0.01f64..2.0) {
        let proxy = VarianceProxy::from_raw(&raw, 1.0).unwrap();
        let d = |a: usize, b: usize| dist[a][b];
        let Ok(ki) = ideal_k(&proxy, &bias) else { return Ok(()) };
        let sel = feasible_k(&proxy, s, d, Some(ki)).unwrap();
        if sel.test_set.contains(&ki) {
            prop_assert!(proxy.values[sel.k_feasible] <= proxy.values[ki]);
        }
    }

    #[test]
    fn test_set_grows_with_threshold((raw, dist, _) in synthetic(), s in 0.01f64..2.0, ds in 0.0f64..2.0) {
        let proxy = VarianceProxy::from_raw(&raw, 1.0).unwrap();
        let d = |a: usize, b: usize| dist[a][b];
        let small = test_set(&proxy, s, d);
        let large = test_set(&proxy, s + ds, d);
        prop_assert!(small.iter().all(|k| large.contains(k)));
        let fs = feasible_k(&proxy, s, d, None).unwrap();
        let fl = feasible_k(&proxy, s + ds, d, None).unwrap();
        prop_assert!(proxy.values[fl.k_feasible] <= proxy.values[fs.k_feasible]);
    }

    #[test]
    fn ideal_choice_is_the_smallest_admissible_proxy((raw, _, bias) in synthetic(), v in 1.0f64..3.0) {
        let proxy = VarianceProxy::from_raw(&raw, v).unwrap();
        match ideal_k(&proxy, &bias) {
            Ok(ki) => {
                prop_assert!(proxy.values[ki] >= bias[ki]);
                for (&v, &b) in proxy.values.iter().zip(&bias) {
                    if v < proxy.values[ki] {
                        prop_assert!(v < b);
                    }
                }
            }
            Err(_) => prop_assert!(proxy.values.iter().zip(&bias).all(|(p, b)| p < b)),
        }
    }

    #[test]
    fn selection_invariant_to_uniform_rescaling((raw, dist, _) in synthetic(), s in 0.01f64..2.0, c in 1.0f64..10.0) {
        let d = |a: usize, b: usize| dist[a][b];
        let base = VarianceProxy::from_raw(&raw, 1.0).unwrap();
        let scaled = VarianceProxy::from_raw(&raw, c).unwrap();
        let a = feasible_k(&base, s, d, None).unwrap();
        let b = feasible_k(&scaled, s / c, d, None).unwrap();
        prop_assert_eq!(a.k_feasible, b.k_feasible);
        prop_assert_eq!(a.test_set, b.test_set);
    }
}
