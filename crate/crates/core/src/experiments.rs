//! Monte Carlo harness and bound evaluators.
//!
//! Every replication draws its data from the [`Substream`] keys
//! (master seed, replication index, stream), runs on a rayon pool and is
//! collected in replication order before any aggregation, so reports do not
//! depend on the number of worker threads.
//!
//! [`Substream`]: crate::dependent_datagen::Substream

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity_bounds::{gamma_bound_l1, variance_term, UniversalConstants, VarianceInputs};
use crate::dependent_datagen::{gen_block_gaussian, linear_truth, make_linear_design, make_np_design, BlockDesign, NOISE_MIX};
use crate::error::{domain, Error, Result};
use crate::estimators::{delta_p, fit_ols, fit_penalized, fit_sieve_ls, LinearPopulation, LossSpec, MomentOracle, PenaltySpec, SieveBasis, SieveKind, SolverOptions, ORACLE_DRAWS};
use crate::mixing_lattice::{build_lattice, effective_n, BetaMixingModel};
use crate::tuning_select::{feasible_k, ideal_k, padded_distance, variance_proxy, ProxySpec, SelectionResult, TuningGrid};

/// Default number of admissible primes, {2, 3, 5}.
pub const DEFAULT_UPSILON: usize = 3;

/// Moment order used when converting (n, m) into n(β); for m-dependent
/// models the result n/m does not depend on it.
pub const EFFECTIVE_N_ORDER: f64 = 4.0;

/// Which experiment a configuration describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Tables12,
    Tables34,
    OlsTail,
    BoundEval,
}

/// Configuration of a Monte Carlo run. Missing fields take the defaults of
/// [`ExperimentConfig::default_for`] for the chosen experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// (n, m) pairs; empty selects the default grid of the experiment.
    pub grid: Vec<[usize; 2]>,
    pub mc_reps: usize,
    pub master_seed: u64,
    pub upsilon: usize,
    /// Number of covariates of the linear designs.
    pub d: usize,
    #[serde(flatten)]
    pub solver: SolverOptions,
    pub basis: SieveKind,
    pub ks: Vec<usize>,
    /// s_n = threshold_scale·log(n/m).
    pub threshold_scale: f64,
    /// Proxy multiplier 𝕍.
    pub v_const: f64,
    pub u_values: Vec<f64>,
    pub oracle_draws: usize,
    pub oracle_seed: u64,
    /// Largest tolerated fraction of failed replications.
    pub max_failure_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::default_for(ExperimentKind::Tables12)
    }
}

impl ExperimentConfig {
    /// Default design of each experiment.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut c = Self {
            experiment: kind,
            grid: Vec::new(),
            mc_reps: 2000,
            master_seed: 20_240_601,
            upsilon: DEFAULT_UPSILON,
            d: 3,
            solver: SolverOptions::default(),
            basis: SieveKind::Polynomial,
            ks: (3..=8).collect(),
            threshold_scale: 0.5,
            v_const: 1.0,
            u_values: vec![4.0, 8.0, 16.0],
            oracle_draws: ORACLE_DRAWS,
            oracle_seed: 7,
            max_failure_rate: 1e-3,
        };
        match kind {
            ExperimentKind::Tables34 => c.mc_reps = 2500,
            ExperimentKind::OlsTail => {
                c.mc_reps = 5000;
                c.upsilon = 2;
            }
            _ => {}
        }
        c
    }

    /// The configured grid, or the default one when empty.
    pub fn effective_grid(&self) -> Vec<(usize, usize)> {
        if !self.grid.is_empty() {
            return self.grid.iter().map(|p| (p[0], p[1])).collect();
        }
        match self.experiment {
            ExperimentKind::Tables12 | ExperimentKind::BoundEval => vec![
                (50, 1),
                (50, 2),
                (100, 1),
                (100, 2),
                (100, 4),
                (250, 1),
                (250, 5),
                (250, 10),
                (1000, 1),
                (1000, 10),
                (1000, 20),
                (1000, 40),
                (1000, 100),
            ],
            ExperimentKind::Tables34 => vec![(100, 1), (300, 1), (500, 1), (1000, 1), (2000, 1), (3000, 1), (3000, 6)],
            ExperimentKind::OlsTail => vec![(64, 1), (64, 4)],
        }
    }

    /// Checks admissibility of every n, divisibility by m and the counts.
    pub fn validate(&self) -> Result<()> {
        if self.mc_reps == 0 {
            return Err(Error::Config("mc_reps must be at least 1".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        for (n, m) in self.effective_grid() {
            if m == 0 || n % m != 0 {
                return Err(Error::Config(format!("m = {m} must divide n = {n}")));
            }
            build_lattice(n as u64, self.upsilon)?;
        }
        if self.experiment == ExperimentKind::Tables34 {
            if self.ks.is_empty() || self.ks.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("ks must be strictly increasing and nonempty".into()));
            }
            SieveBasis::new(self.basis, *self.ks.last().unwrap())?;
        }
        if !(self.threshold_scale > 0.0 && self.v_const >= 1.0) {
            return Err(Error::Config("threshold_scale must be positive and v_const at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.max_failure_rate) {
            return Err(Error::Config("max_failure_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One line of a report. Fields that do not apply to an experiment are
/// `None` and print as empty cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub n: usize,
    pub m: usize,
    pub method: String,
    pub nbeta: Option<f64>,
    pub mu_actual: Option<f64>,
    pub mu_predicted: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub rn_q10: Option<f64>,
    pub rn_q50: Option<f64>,
    pub rn_q90: Option<f64>,
    pub k_ideal: Option<f64>,
    pub k_ideal_freq: Option<f64>,
    pub k_feasible: Option<f64>,
    pub k_feasible_freq: Option<f64>,
    pub v_ideal: Option<f64>,
    pub v_feasible: Option<f64>,
    pub u: Option<f64>,
    pub tail_frequency: Option<f64>,
    pub tail_bound: Option<f64>,
    pub max_optimality_residual: Option<f64>,
    pub reps: usize,
    pub failures: usize,
}

/// Column names of the CSV report, in order.
pub const REPORT_COLUMNS: [&str; 23] = [
    "experiment",
    "n",
    "m",
    "method",
    "nbeta",
    "mu_actual",
    "mu_predicted",
    "mc_std_error",
    "rn_q10",
    "rn_q50",
    "rn_q90",
    "k_ideal",
    "k_ideal_freq",
    "k_feasible",
    "k_feasible_freq",
    "v_ideal",
    "v_feasible",
    "u",
    "tail_frequency",
    "tail_bound",
    "max_optimality_residual",
    "reps",
    "failures",
];

/// Formats a float with six significant digits.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let e: i32 = sci.rsplit('e').next().and_then(|t| t.parse().ok()).unwrap_or(0);
    if !(-4..15).contains(&e) {
        return sci;
    }
    format!("{:.*}", (5 - e).max(0) as usize, v)
}

impl ReportRow {
    fn cells(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(format_sig6).unwrap_or_default();
        vec![
            self.experiment.clone(),
            self.n.to_string(),
            self.m.to_string(),
            self.method.clone(),
            f(self.nbeta),
            f(self.mu_actual),
            f(self.mu_predicted),
            f(self.mc_std_error),
            f(self.rn_q10),
            f(self.rn_q50),
            f(self.rn_q90),
            f(self.k_ideal),
            f(self.k_ideal_freq),
            f(self.k_feasible),
            f(self.k_feasible_freq),
            f(self.v_ideal),
            f(self.v_feasible),
            f(self.u),
            f(self.tail_frequency),
            f(self.tail_bound),
            f(self.max_optimality_residual),
            self.reps.to_string(),
            self.failures.to_string(),
        ]
    }
}

/// Writes rows as CSV with a header and floats at six significant digits.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Config(e.to_string());
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(REPORT_COLUMNS).map_err(io)?;
    for row in rows {
        wtr.write_record(row.cells()).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::Config(e.to_string()))
}

/// Runs `f` for replications 0..reps, on a pool of `workers` threads when
/// given, and returns the results in replication order.
pub fn run_replications<T: Send>(reps: usize, workers: Option<usize>, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<Result<T>>> {
    let job = || (0..reps as u64).into_par_iter().map(&f).collect::<Vec<_>>();
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

fn successes<T>(results: Vec<Result<T>>, max_rate: f64) -> Result<(Vec<T>, usize)> {
    let reps = results.len();
    let mut ok = Vec::with_capacity(reps);
    let mut failures = 0;
    let mut first = String::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                if failures == 0 {
                    first = e.to_string();
                }
                failures += 1;
            }
        }
    }
    if failures as f64 > max_rate * reps as f64 || ok.is_empty() {
        return Err(Error::TooManyFailures { failures, reps, first });
    }
    Ok((ok, failures))
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Most frequent value and its relative frequency; ties go to the smaller value.
pub fn mode(values: &[usize]) -> (usize, f64) {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    let (best, count) = counts.iter().fold((0, 0), |acc, (&k, &c)| if c > acc.1 { (k, c) } else { acc });
    (best, count as f64 / values.len() as f64)
}

/// n(β) of an m-dependent sample of size n.
pub fn nbeta_of(n: usize, m: usize, upsilon: usize) -> Result<f64> {
    let lattice = build_lattice(n as u64, upsilon)?;
    Ok(effective_n(&BetaMixingModel::indicator(m as u64)?, &lattice, EFFECTIVE_N_ORDER)?.value)
}

/// Mean population distance of least absolute deviation ("median") and
/// least squares ("mean") fits in the linear block design, scaled by 100.
pub fn run_tables12(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let d = config.d;
    let population = LinearPopulation::block_gaussian(d);
    let theta_star = linear_truth(d);
    let mut rows = Vec::new();
    let mut base: BTreeMap<(usize, &str), f64> = BTreeMap::new();
    for (n, m) in config.effective_grid() {
        let design = BlockDesign::new(n, m, d, config.master_seed);
        let results = run_replications(config.mc_reps, workers, |rep| {
            let data = make_linear_design(&design, rep)?;
            let lad = fit_penalized(&data.x, &data.y, LossSpec::AbsoluteHalf, PenaltySpec::none(), &config.solver)?;
            let ols = fit_ols(&data.x, &data.y)?;
            Ok((
                delta_p(&population, LossSpec::AbsoluteHalf, &lad.theta, &theta_star)?,
                delta_p(&population, LossSpec::Squared, &ols.theta, &theta_star)?,
                lad.optimality_residual,
            ))
        })?;
        let (ok, failures) = successes(results, config.max_failure_rate)?;
        let nbeta = nbeta_of(n, m, config.upsilon)?;
        let max_res = ok.iter().map(|r| r.2).fold(0.0, f64::max);
        for (method, pick) in [("median", 0usize), ("mean", 1)] {
            let vals: Vec<f64> = ok.iter().map(|r| if pick == 0 { r.0 } else { r.1 }).collect();
            let (mean, se) = mean_se(&vals);
            let actual = 100.0 * mean;
            if m == 1 {
                base.insert((n, method), actual);
            }
            let predicted = base.get(&(n, method)).map(|b| (m as f64).sqrt() * b);
            rows.push(ReportRow {
                experiment: "tables12".into(),
                n,
                m,
                method: method.into(),
                nbeta: Some(nbeta),
                mu_actual: Some(actual),
                mu_predicted: predicted,
                mc_std_error: Some(100.0 * se),
                max_optimality_residual: (pick == 0).then_some(max_res),
                reps: config.mc_reps,
                failures,
                ..Default::default()
            });
        }
    }
    Ok(rows)
}

/// Index of the ideal sieve order, or `None` when no order in `ks` has its
/// bias below the variance proxy.
pub fn sieve_ideal_k(ks: &[usize], nbeta: f64, v_const: f64, sqrt_bias: &[f64]) -> Result<Option<usize>> {
    let grid = TuningGrid::sieve(ks)?;
    let proxy = variance_proxy(ProxySpec::Sieve, nbeta, &grid, v_const)?;
    match ideal_k(&proxy, sqrt_bias) {
        Ok(i) => Ok(Some(i)),
        Err(Error::EmptyIdealSet) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Sieve fits of every order in `ks` and the feasible selection among them.
///
/// `metric` is the moment matrix of the largest order; distances between
/// fits of orders k < k' use its leading k'×k' block with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn sieve_selection(
    kind: SieveKind,
    ks: &[usize],
    w: &[f64],
    y: &DVector<f64>,
    nbeta: f64,
    s: f64,
    v_const: f64,
    metric: &DMatrix<f64>,
    k_ideal: Option<usize>,
) -> Result<(SelectionResult, Vec<DVector<f64>>)> {
    let grid = TuningGrid::sieve(ks)?;
    let proxy = variance_proxy(ProxySpec::Sieve, nbeta, &grid, v_const)?;
    let fits = ks
        .iter()
        .map(|&k| Ok(fit_sieve_ls(SieveBasis::new(kind, k)?, w, y)?.theta))
        .collect::<Result<Vec<_>>>()?;
    let dist = |a: usize, b: usize| padded_distance(metric, &fits[a], &fits[b]).unwrap_or(f64::INFINITY);
    let sel = feasible_k(&proxy, s, dist, k_ideal)?;
    Ok((sel, fits))
}

/// Feasible sieve order for an observed sample (w, y) of an m-dependent
/// process, with distances measured by the sample moment matrix.
#[allow(clippy::too_many_arguments)]
pub fn tune_sieve(kind: SieveKind, ks: &[usize], w: &[f64], y: &DVector<f64>, m: usize, upsilon: usize, threshold_scale: f64, v_const: f64) -> Result<SelectionResult> {
    let n = w.len();
    if m == 0 || !n.is_multiple_of(m) {
        return domain(format!("m = {m} must divide the sample size {n}"));
    }
    if !(threshold_scale > 0.0) {
        return domain("threshold scale must be positive");
    }
    let nbeta = nbeta_of(n, m, upsilon)?;
    let kmax = *ks.last().ok_or_else(|| Error::Domain("empty order grid".into()))?;
    let q = SieveBasis::new(kind, kmax)?.design(w);
    let metric = q.transpose() * &q / n as f64;
    let s = threshold_scale * (n as f64 / m as f64).ln();
    Ok(sieve_selection(kind, ks, w, y, nbeta, s, v_const, &metric, None)?.0)
}

/// Selection of the sieve order in the nonparametric design: quantiles of
/// r_n = √n·||fit − θ*||_{L²(P)} / (√(m·k^I)·s_n), k^I, modal k^F, and the
/// proxies √(k/n(β)) at both. Columns where no order attains the ideal
/// inequality leave k^I and the r_n quantiles empty.
pub fn run_tables34(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let kmax = *config.ks.last().unwrap();
    let oracle = MomentOracle::np_design(config.basis, kmax, config.oracle_draws, config.oracle_seed)?;
    let (bias, _) = oracle.bias_sequence(&config.ks)?;
    let metric = oracle.gram(kmax)?;
    let mut rows = Vec::new();
    for (n, m) in config.effective_grid() {
        let nbeta = nbeta_of(n, m, config.upsilon)?;
        let s = config.threshold_scale * (n as f64 / m as f64).ln();
        let ki = sieve_ideal_k(&config.ks, nbeta, config.v_const, &bias)?;
        let results = run_replications(config.mc_reps, workers, |rep| {
            let data = make_np_design(n, m, NOISE_MIX, config.master_seed, rep)?;
            let w: Vec<f64> = data.x.column(0).iter().copied().collect();
            let (sel, fits) = sieve_selection(config.basis, &config.ks, &w, &data.y, nbeta, s, config.v_const, &metric, ki)?;
            let err = oracle.l2_error(&fits[sel.k_feasible])?;
            let rn = ki.map(|i| (n as f64).sqrt() * err / ((m * config.ks[i]) as f64).sqrt() / s);
            Ok((rn, config.ks[sel.k_feasible]))
        })?;
        let (ok, failures) = successes(results, config.max_failure_rate)?;
        let rn: Vec<f64> = ok.iter().filter_map(|r| r.0).collect();
        let (kf, kf_freq) = mode(&ok.iter().map(|r| r.1).collect::<Vec<_>>());
        let q = |p: f64| (!rn.is_empty()).then(|| quantile(&rn, p));
        let ki = ki.map(|i| config.ks[i]);
        let method = match config.basis {
            SieveKind::Polynomial => "polynomial",
            SieveKind::PSpline => "pspline",
        };
        rows.push(ReportRow {
            experiment: "tables34".into(),
            n,
            m,
            method: method.into(),
            nbeta: Some(nbeta),
            rn_q10: q(0.1),
            rn_q50: q(0.5),
            rn_q90: q(0.9),
            mc_std_error: (!rn.is_empty()).then(|| mean_se(&rn).1),
            k_ideal: ki.map(|k| k as f64),
            k_ideal_freq: ki.map(|_| 1.0),
            k_feasible: Some(kf as f64),
            k_feasible_freq: Some(kf_freq),
            v_ideal: ki.map(|k| (k as f64 / nbeta).sqrt()),
            v_feasible: Some((kf as f64 / nbeta).sqrt()),
            reps: config.mc_reps,
            failures,
            ..Default::default()
        });
    }
    Ok(rows)
}

/// Covariates with n^{−1}X'X = I and the error stream of the least squares
/// toy model for replication `rep`.
fn whitened_toy_sample(n: usize, mu0: usize, d: usize, master: u64, rep: u64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let streams = gen_block_gaussian(n, mu0, d + 1, NOISE_MIX, master, rep)?;
    let x = DMatrix::from_fn(n, d, |i, j| streams[j][i]);
    let s = x.transpose() * &x / n as f64;
    let eig = s.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-12)) {
        return Err(Error::SingularDesign("sample second-moment matrix is singular".into()));
    }
    let inv_sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * eig.eigenvectors.transpose();
    Ok((x * inv_sqrt, DVector::from_column_slice(&streams[d])))
}

/// Tail frequencies of ||θ̂ − θ*||₂ ≥ u·√(d·μ₀/n) for θ̂ = n^{−1}X'Y with
/// whitened covariates, next to the bound (4d/u)·√E[(Δ/√μ₀)²] where
/// Δ_{j,l} = μ₀^{−1/2} Σ_{i in block j} x_{il}U_i. The second moment comes
/// from an independent fixed-seed run and is maximized over l.
pub fn run_ols_tail(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let d = config.d;
    let mut rows = Vec::new();
    for (n, mu0) in config.effective_grid() {
        let results = run_replications(config.mc_reps, workers, |rep| {
            let (x, u) = whitened_toy_sample(n, mu0, d, config.master_seed, rep)?;
            Ok((x.transpose() * u / n as f64).norm())
        })?;
        let (norms, failures) = successes(results, config.max_failure_rate)?;
        let moments = run_replications(config.mc_reps, workers, |rep| {
            let (x, u) = whitened_toy_sample(n, mu0, d, config.oracle_seed, rep)?;
            let mut acc = vec![0.0; d];
            for j in 0..n / mu0 {
                for (l, a) in acc.iter_mut().enumerate() {
                    let s: f64 = (j * mu0..(j + 1) * mu0).map(|i| x[(i, l)] * u[i]).sum();
                    let delta = s / (mu0 as f64).sqrt();
                    *a += delta * delta / mu0 as f64;
                }
            }
            Ok(acc)
        })?;
        let (moments, _) = successes(moments, config.max_failure_rate)?;
        let blocks = (n / mu0) as f64;
        let second = (0..d)
            .map(|l| moments.iter().map(|a| a[l]).sum::<f64>() / (moments.len() as f64 * blocks))
            .fold(0.0, f64::max);
        let scale = (d as f64 * mu0 as f64 / n as f64).sqrt();
        for &u in &config.u_values {
            let hits = norms.iter().filter(|&&v| v >= u * scale).count() as f64;
            let freq = hits / norms.len() as f64;
            rows.push(ReportRow {
                experiment: "ols_tail".into(),
                n,
                m: mu0,
                method: "ols".into(),
                nbeta: Some(n as f64 / mu0 as f64),
                u: Some(u),
                tail_frequency: Some(freq),
                tail_bound: Some(4.0 * d as f64 / u * second.sqrt()),
                mc_std_error: Some((freq * (1.0 - freq) / norms.len() as f64).sqrt()),
                reps: config.mc_reps,
                failures,
                ..Default::default()
            });
        }
    }
    Ok(rows)
}

/// Penalty-specific inputs of the quantile regression bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundPenalty {
    /// ℓ¹ penalty; `theta_norm` = ||θ*||₁ and `m_bound` = M_{n,k}.
    L1 { theta_norm: f64, m_bound: f64 },
    /// Weighted ℓ² penalty with p_j = j^m; `theta_norm_sq` = ||θ*||²_{ℓ²(p)}
    /// and `emin_w` the smallest eigenvalue of W.
    WeightedL2 { m: f64, theta_norm_sq: f64, emin_w: f64 },
}

/// Inputs of [`eval_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub d: usize,
    pub n: u64,
    pub upsilon: usize,
    pub mixing: BetaMixingModel,
    /// Moment order r > 2 entering n(β).
    pub r: f64,
    /// Moment order π₀ and the moment bound 𝔼_{π₀}.
    pub pi0: f64,
    pub e_pi0: f64,
    pub tr_winv: f64,
    pub lambda: f64,
    /// Confidence parameter u; the bound holds with probability 1 − 𝔾₀/u.
    pub u: f64,
    pub tau: f64,
    /// Chaining constant L.
    pub l_talagrand: f64,
    pub penalty: BoundPenalty,
    /// When given, c in the tail bound φ(A) = c/A of the L¹ envelope.
    pub l1_tail_moment: Option<f64>,
}

/// Output of [`eval_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub nbeta: f64,
    pub constants: UniversalConstants,
    pub moment_factor: f64,
    pub variance: f64,
    pub bias: f64,
    /// 𝕂·max{1, 2^{1/π₀}𝔼_{π₀}}·(variance + bias).
    pub rate: f64,
    /// u·rate.
    pub bound: f64,
    /// 1 − 𝔾₀/u.
    pub probability: f64,
    /// rate·inf_{A≥1}{φ(A) + 1 + 𝔾₀ ln A} and the minimizing A.
    pub l1_envelope: Option<(f64, f64)>,
}

/// inf_{A≥1} { φ(A) + 1 + g0·ln A } and its minimizer, searched on a
/// geometric grid up to 10¹² and refined by golden sections.
pub fn l1_envelope(g0: f64, phi: impl Fn(f64) -> f64) -> (f64, f64) {
    let h = |a: f64| phi(a) + 1.0 + g0 * a.ln();
    let ratio: f64 = 1.01;
    let mut best = (h(1.0), 1.0);
    let mut a = 1.0;
    while a < 1e12 {
        a *= ratio;
        let v = h(a);
        if v < best.0 {
            best = (v, a);
        }
    }
    let (mut lo, mut hi) = ((best.1 / ratio).max(1.0), best.1 * ratio);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = hi - g * (hi - lo);
        let dd = lo + g * (hi - lo);
        if h(c) < h(dd) {
            hi = dd;
        } else {
            lo = c;
        }
    }
    let a_star = 0.5 * (lo + hi);
    if h(a_star) < best.0 {
        (h(a_star), a_star)
    } else {
        best
    }
}

/// Evaluates the high-probability bound of penalized quantile regression.
pub fn eval_bound(p: &BoundParams) -> Result<BoundReport> {
    if p.d == 0 || !(p.lambda > 0.0) || !(p.u > 0.0) || !(p.tr_winv >= 0.0) || !(p.pi0 > 0.0) || !(p.e_pi0 >= 0.0) {
        return domain("need d ≥ 1, λ > 0, u > 0, π₀ > 0 and nonnegative trace and moment");
    }
    if !(p.tau > 0.0 && p.tau < 1.0) {
        return domain("tau must lie in (0, 1)");
    }
    let lattice = build_lattice(p.n, p.upsilon)?;
    let nbeta = effective_n(&p.mixing, &lattice, p.r)?.value;
    let constants = UniversalConstants::new(lattice.p_upsilon(), p.l_talagrand, p.tau)?;
    let moment_factor = (2f64.powf(1.0 / p.pi0) * p.e_pi0).max(1.0);
    let (variance, bias) = match p.penalty {
        BoundPenalty::L1 { theta_norm, m_bound } => {
            if !(theta_norm >= 0.0 && m_bound >= 0.0) {
                return domain("norms must be nonnegative");
            }
            let b = gamma_bound_l1(p.d, p.tr_winv, m_bound / p.lambda, None)?.b;
            let inputs = VarianceInputs { lambda: p.tr_winv.sqrt(), b, c: nbeta.powf(-0.5) };
            (variance_term(&inputs), (p.lambda * theta_norm).sqrt())
        }
        BoundPenalty::WeightedL2 { m, theta_norm_sq, emin_w } => {
            if !(m >= 0.0) || !(theta_norm_sq >= 0.0) || !(emin_w > 0.0) {
                return domain("need m ≥ 0, a nonnegative norm and a positive smallest eigenvalue");
            }
            let d = p.d as f64;
            let var = if m > 1.0 {
                let bk = ((emin_w / (2.0 * (m - 1.0))).powf(1.0 / m) + 1.0) * 2.0 / emin_w;
                (p.lambda.powf(-1.0 / m).min(d) / nbeta * bk).sqrt()
            } else {
                let first = if m < 1.0 { d.powf(1.0 - m) / ((1.0 - m) * p.lambda) } else { f64::INFINITY };
                (first.min(2.0 * p.tr_winv) / nbeta).sqrt()
            };
            (var, (p.lambda * theta_norm_sq).sqrt())
        }
    };
    let rate = constants.kqr * moment_factor * (variance + bias);
    let l1 = p.l1_tail_moment.map(|c| {
        let (v, a) = l1_envelope(constants.g0, |a| c / a);
        (rate * v, a)
    });
    Ok(BoundReport {
        nbeta,
        constants,
        moment_factor,
        variance,
        bias,
        rate,
        bound: p.u * rate,
        probability: 1.0 - constants.g0 / p.u,
        l1_envelope: l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(1.98612345), "1.98612");
        assert_eq!(format_sig6(1234.56789), "1234.57");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.5e-7), "1.50000e-7");
        assert_eq!(format_sig6(9.9999999), "10.0000");
    }

    #[test]
    fn quantile_and_mode() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(mode(&[5, 7, 7, 5, 3]), (5, 0.4));
    }

    #[test]
    fn default_grids_are_admissible() {
        for kind in [ExperimentKind::Tables12, ExperimentKind::Tables34, ExperimentKind::OlsTail] {
            ExperimentConfig::default_for(kind).validate().unwrap();
        }
        let mut bad = ExperimentConfig { grid: vec![[77, 1]], ..Default::default() };
        assert!(bad.validate().is_err());
        bad.grid = vec![[100, 3]];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nbeta_is_n_over_m() {
        assert_relative_eq!(nbeta_of(3000, 6, 3).unwrap(), 500.0, max_relative = 1e-12);
        assert_relative_eq!(nbeta_of(1000, 1, 3).unwrap(), 1000.0, max_relative = 1e-12);
    }

    fn params(penalty: BoundPenalty) -> BoundParams {
        BoundParams {
            d: 10,
            n: 1000,
            upsilon: 3,
            mixing: BetaMixingModel::iid(),
            r: 4.0,
            pi0: 2.0,
            e_pi0: 1.0,
            tr_winv: 10.0,
            lambda: 0.01,
            u: 100.0,
            tau: 0.5,
            l_talagrand: 1.0,
            penalty,
            l1_tail_moment: None,
        }
    }

    #[test]
    fn bias_only_bound() {
        let mut p = params(BoundPenalty::L1 { theta_norm: 2.0, m_bound: 0.0 });
        p.tr_winv = 0.0;
        let r = eval_bound(&p).unwrap();
        assert_eq!(r.variance, 0.0);
        let k = (2f64.sqrt() * 10.0 * 1.5f64).max(1.0);
        let expected = p.u * k * (2f64.sqrt() * 1.0f64).max(1.0) * (0.01f64 * 2.0).sqrt();
        assert_relative_eq!(r.bound, expected, max_relative = 1e-12);
        assert_relative_eq!(r.probability, 1.0 - r.constants.g0 / 100.0);
    }

    #[test]
    fn g0_at_two() {
        let mut p = params(BoundPenalty::L1 { theta_norm: 1.0, m_bound: 1.0 });
        p.upsilon = 1;
        p.n = 1024;
        assert_relative_eq!(eval_bound(&p).unwrap().constants.g0, 82.54, max_relative = 1e-4);
    }

    #[test]
    fn l2p_variance_branches() {
        let r = eval_bound(&params(BoundPenalty::WeightedL2 { m: 0.0, theta_norm_sq: 1.0, emin_w: 1.0 })).unwrap();
        // min{λ^{-1}d, 2 tr W^{-1}} = min{1000, 20} = 20.
        assert_relative_eq!(r.variance, (20.0f64 / 1000.0).sqrt(), max_relative = 1e-12);
        let r = eval_bound(&params(BoundPenalty::WeightedL2 { m: 2.0, theta_norm_sq: 1.0, emin_w: 1.0 })).unwrap();
        let bk = ((0.5f64).powf(0.5) + 1.0) * 2.0;
        assert_relative_eq!(r.variance, (10.0f64 / 1000.0 * bk).sqrt(), max_relative = 1e-12);
        assert!(eval_bound(&params(BoundPenalty::WeightedL2 { m: -1.0, theta_norm_sq: 1.0, emin_w: 1.0 })).is_err());
    }

    #[test]
    fn envelope_minimizer() {
        // φ(A) = c/A gives A* = c/g0 and value g0 + 1 + g0 ln(c/g0).
        let (v, a) = l1_envelope(2.0, |a| 100.0 / a);
        assert_relative_eq!(a, 50.0, max_relative = 1e-6);
        assert_relative_eq!(v, 3.0 + 2.0 * 50f64.ln(), max_relative = 1e-10);
        let (v, a) = l1_envelope(2.0, |a| 1.0 / a);
        assert_eq!(a, 1.0);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn worker_count_does_not_change_reports() {
        let mut c = ExperimentConfig::default_for(ExperimentKind::Tables12);
        c.grid = vec![[50, 1], [50, 2]];
        c.mc_reps = 40;
        let a = run_tables12(&c, Some(1)).unwrap();
        let b = run_tables12(&c, Some(3)).unwrap();
        assert_eq!(a, b);
        assert!(a[2].mu_predicted.is_some());
    }
}
