//! Data-driven choice of the regularization level.
//!
//! Grid points are ordered so that the variance proxy Ṽ is non-decreasing
//! along the grid: sieve orders increase, penalty levels decrease. With √B_k
//! the square-root bias at grid point k:
//!
//! ```text
//! ideal set      I = { k : Ṽ_k ≥ √B_k },                  k^I = argmin_{k∈I} Ṽ_k
//! test set       F_s = { k : dist(ν_k, ν_k') ≤ 4·s·Ṽ_k' for all k' ≥ k }
//! feasible point k^F = argmin_{k∈F_s} Ṽ_k
//! ```
//!
//! Only k^F is computable from data; k^I needs the bias and serves as the
//! benchmark.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// What the grid labels mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Increasing sieve orders k.
    SieveK,
    /// Decreasing penalty levels λ.
    PenaltyLambda,
}

/// An ordered grid of tuning values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub kind: GridKind,
    pub labels: Vec<f64>,
}

impl TuningGrid {
    /// Sieve orders, which must be positive and strictly increasing.
    pub fn sieve(ks: &[usize]) -> Result<Self> {
        if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
            return domain("sieve orders must be positive and strictly increasing");
        }
        Ok(Self { kind: GridKind::SieveK, labels: ks.iter().map(|&k| k as f64).collect() })
    }

    /// Penalty levels, stored in decreasing order. Duplicates and
    /// nonpositive values are rejected.
    pub fn lambdas(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return domain("penalty levels must be positive and finite");
        }
        let mut labels = values.to_vec();
        labels.sort_by(|a, b| b.total_cmp(a));
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return domain("penalty levels must be distinct");
        }
        Ok(Self { kind: GridKind::PenaltyLambda, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which proxy formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxySpec {
    /// √(k/n(β)).
    Sieve,
    /// (log 2d / n(β))^{1/4}·√(L₀/λ) with L₀ = n^{−1} Σ_i φ(Z_i, 0).
    L1 { d: usize, mean_loss_at_zero: f64 },
    /// 2·√(λ^{−1/m}/n(β)).
    WeightedL2 { m: f64 },
}

/// Proxy values along a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProxy {
    pub values: Vec<f64>,
    /// The multiplier 𝕍 ≥ 1 applied to every raw value.
    pub v_const: f64,
    /// True when a running maximum was needed to make the values monotone.
    pub monotonized: bool,
}

impl VarianceProxy {
    /// Wraps raw values, applying the multiplier and a running maximum.
    pub fn from_raw(raw: &[f64], v_const: f64) -> Result<Self> {
        if !(v_const >= 1.0 && v_const.is_finite()) {
            return domain(format!("the proxy multiplier must be at least 1, got {v_const}"));
        }
        if raw.is_empty() || raw.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return domain("proxy values must be nonnegative and finite");
        }
        let mut monotonized = false;
        let mut cur = 0.0f64;
        let values = raw
            .iter()
            .map(|&v| {
                let v = v * v_const;
                if v < cur {
                    monotonized = true;
                }
                cur = cur.max(v);
                cur
            })
            .collect();
        Ok(Self { values, v_const, monotonized })
    }
}

/// Evaluates the proxy formula at every grid point.
pub fn variance_proxy(spec: ProxySpec, nbeta: f64, grid: &TuningGrid, v_const: f64) -> Result<VarianceProxy> {
    if !(nbeta > 0.0 && nbeta.is_finite()) {
        return domain(format!("effective sample size must be positive, got {nbeta}"));
    }
    if grid.is_empty() {
        return domain("grid is empty");
    }
    let need_lambda = |l: f64| if l > 0.0 { Ok(l) } else { domain(format!("lambda must be positive, got {l}")) };
    let raw = grid
        .labels
        .iter()
        .map(|&label| match spec {
            ProxySpec::Sieve => Ok((label / nbeta).sqrt()),
            ProxySpec::L1 { d, mean_loss_at_zero } => {
                let lam = need_lambda(label)?;
                if d == 0 || !(mean_loss_at_zero >= 0.0) {
                    return domain("need d ≥ 1 and a nonnegative loss at zero");
                }
                Ok(((2.0 * d as f64).ln() / nbeta).powf(0.25) * (mean_loss_at_zero / lam).sqrt())
            }
            ProxySpec::WeightedL2 { m } => {
                let lam = need_lambda(label)?;
                if !(m > 0.0) {
                    return domain(format!("weight exponent must be positive, got {m}"));
                }
                Ok(2.0 * (lam.powf(-1.0 / m) / nbeta).sqrt())
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    VarianceProxy::from_raw(&raw, v_const)
}

/// Index of k^I: the smallest proxy among grid points with Ṽ_k ≥ √B_k,
/// ties going to the largest label.
pub fn ideal_k(proxy: &VarianceProxy, sqrt_bias: &[f64]) -> Result<usize> {
    if sqrt_bias.len() != proxy.values.len() {
        return Err(Error::ShapeMismatch(format!("{} bias values for {} grid points", sqrt_bias.len(), proxy.values.len())));
    }
    let mut best: Option<usize> = None;
    for (k, (&v, &b)) in proxy.values.iter().zip(sqrt_bias).enumerate() {
        if v >= b && best.is_none_or(|j| v <= proxy.values[j]) {
            best = Some(k);
        }
    }
    best.ok_or(Error::EmptyIdealSet)
}

/// Indices k with dist(k, k') ≤ 4·s·Ṽ_{k'} for every k' ≥ k.
pub fn test_set(proxy: &VarianceProxy, s: f64, dist: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let len = proxy.values.len();
    (0..len)
        .filter(|&k| (k + 1..len).all(|kp| dist(k, kp) <= 4.0 * s * proxy.values[kp]))
        .collect()
}

/// √((a − b)' M (a − b)) with the shorter vector zero-padded to the order of M.
pub fn padded_distance(metric: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let k = metric.nrows();
    if a.len() > k || b.len() > k || metric.ncols() != k {
        return Err(Error::ShapeMismatch("vectors longer than the metric".into()));
    }
    let mut delta = DVector::zeros(k);
    {
        let mut head = delta.rows_mut(0, a.len());
        head += a;
    }
    {
        let mut head = delta.rows_mut(0, b.len());
        head -= b;
    }
    Ok((delta.transpose() * metric * &delta)[0].max(0.0).sqrt())
}

/// Outcome of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub k_ideal: Option<usize>,
    pub k_feasible: usize,
    pub test_set: Vec<usize>,
    pub s: f64,
}

impl SelectionResult {
    /// Grid labels of the ideal and feasible choices.
    pub fn labels(&self, grid: &TuningGrid) -> (Option<f64>, f64) {
        (self.k_ideal.map(|k| grid.labels[k]), grid.labels[self.k_feasible])
    }
}

/// k^F: the member of the test set with the smallest proxy, the first such
/// index on ties.
pub fn feasible_k(proxy: &VarianceProxy, s: f64, dist: impl Fn(usize, usize) -> f64, k_ideal: Option<usize>) -> Result<SelectionResult> {
    if !(s > 0.0) {
        return domain(format!("threshold must be positive, got {s}"));
    }
    let set = test_set(proxy, s, dist);
    let k_feasible = set
        .iter()
        .copied()
        .reduce(|a, b| if proxy.values[b] < proxy.values[a] { b } else { a })
        .ok_or(Error::EmptyTestSet { s })?;
    Ok(SelectionResult { k_ideal, k_feasible, test_set: set, s })
}

/// Default threshold s_n = 0.5·log(n/m).
pub fn default_threshold(n: usize, m: usize) -> Result<f64> {
    if m == 0 || n <= m {
        return domain(format!("need n > m ≥ 1, got n = {n}, m = {m}"));
    }
    Ok(0.5 * (n as f64 / m as f64).ln())
}

/// The threshold s solving 2·|K|·G0/s = α for tail function u ↦ G0/u.
pub fn alpha_threshold(grid_len: usize, g0: f64, alpha: f64) -> Result<f64> {
    if grid_len == 0 || !(g0 > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return domain("need a nonempty grid, G0 > 0 and α ∈ (0, 1)");
    }
    Ok(2.0 * grid_len as f64 * g0 / alpha)
}
