use betamix::complexity_bounds::g0;
use betamix::experiments::*;

fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn growth_in_m_is_of_order_sqrt_m_and_below_the_envelope() {
    let mut config = ExperimentConfig::default_for(ExperimentKind::Tables12);
    config.grid = vec![[1000, 1], [1000, 10], [1000, 20], [1000, 40], [1000, 100]];
    config.mc_reps = 300;
    let rows = run_tables12(&config, None).unwrap();
    let (envelope, _) = l1_envelope(g0(5), |a| 1.0 / a);
    for method in ["median", "mean"] {
        let sel: Vec<&ReportRow> = rows.iter().filter(|r| r.method == method).collect();
        let lm: Vec<f64> = sel.iter().map(|r| (r.m as f64).ln()).collect();
        let lmu: Vec<f64> = sel.iter().map(|r| r.mu_actual.unwrap().ln()).collect();
        let slope = fitted_slope(&lm, &lmu);
        assert!((0.40..=0.60).contains(&slope), "{method}: slope {slope}");
        let base = sel[0].mu_actual.unwrap();
        let calibrated = base / (3.0 / 1000.0f64).sqrt();
        for r in &sel {
            let rate = calibrated * (3.0 / r.nbeta.unwrap()).sqrt();
            assert!(r.mu_actual.unwrap() <= rate * envelope, "{method} m = {}", r.m);
        }
    }
}

#[test]
fn ols_tail_frequencies_below_bound() {
    let mut config = ExperimentConfig::default_for(ExperimentKind::OlsTail);
    config.mc_reps = 2000;
    config.u_values = vec![1.0, 2.0, 4.0, 8.0];
    for row in run_ols_tail(&config, None).unwrap() {
        let slack = row.tail_bound.unwrap() - row.tail_frequency.unwrap();
        assert!(slack >= -3.0 * row.mc_std_error.unwrap(), "{row:?}");
    }
}

#[test]
fn ols_tail_is_worker_count_invariant() {
    let mut a = ExperimentConfig::default_for(ExperimentKind::OlsTail);
    a.grid = vec![[64, 1]];
    a.mc_reps = 500;
    let rows_a = run_ols_tail(&a, Some(1)).unwrap();
    let rows_b = run_ols_tail(&a, Some(2)).unwrap();
    assert_eq!(rows_a, rows_b);
}

#[test]
fn csv_report_has_fixed_header_and_six_digit_floats() {
    let row = ReportRow { experiment: "x".into(), n: 10, m: 1, method: "mean".into(), mu_actual: Some(std::f64::consts::PI), reps: 1, ..Default::default() };
    let mut buf = Vec::new();
    write_report_csv(&[row], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
    assert!(lines.next().unwrap().contains(",3.14159,"));
}
