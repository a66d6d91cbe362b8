//! β-mixing decay models, the admissible sample-size lattice, the
//! dependence-weighted norm family and the effective number of observations.
//!
//! A decay model fixes the mixing coefficients β(q). The weight function
//!
//! ```text
//! μ_q(u) = Σ_{i=0..q} 1{ u ≤ 0.5·β(i) },   u ∈ (0, 1]
//! ```
//!
//! is a step function, so every integral against it is evaluated exactly by
//! splitting (0, 1] at the thresholds 0.5·β(i). The effective number of
//! observations is
//!
//! ```text
//! n(β) = n / ( 2^{1−2/r} · ( ∫₀¹ μ_{q_{n,0}}(u)^{r/(r−2)} du )^{(r−2)/r} )
//! ```
//!
//! where q_{n,k} is the smallest divisor s of n with 0.5·β(s)·n ≤ s·2^{k+1}.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Shape of the decay q ↦ β(q) for q ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingKind {
    /// m-dependence: β(q) = 1 for 1 ≤ q < m and 0 for q ≥ m.
    Indicator { m: u64 },
    /// Polynomial decay β(q) = (1+q)^{−m0}.
    Polynomial { m0: f64 },
    /// Independent data: β(q) = 0 for q ≥ 1.
    Iid,
}

/// A β-mixing decay model together with the value assigned to β(0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaMixingModel {
    pub kind: MixingKind,
    /// β(0); either 1 (the default) or 2.
    pub beta0: f64,
}

impl BetaMixingModel {
    /// m-dependent model with β(0) = 1.
    pub fn indicator(m: u64) -> Result<Self> {
        if m == 0 {
            return domain("indicator dependence length must be at least 1");
        }
        Ok(Self { kind: MixingKind::Indicator { m }, beta0: 1.0 })
    }

    /// Polynomially mixing model with β(0) = 1.
    pub fn polynomial(m0: f64) -> Result<Self> {
        if !(m0 > 0.0 && m0.is_finite()) {
            return domain(format!("polynomial exponent must be positive and finite, got {m0}"));
        }
        Ok(Self { kind: MixingKind::Polynomial { m0 }, beta0: 1.0 })
    }

    /// Independent model with β(0) = 1.
    pub fn iid() -> Self {
        Self { kind: MixingKind::Iid, beta0: 1.0 }
    }

    /// Returns a copy with β(0) replaced; only 1 and 2 are accepted.
    pub fn with_beta0(self, beta0: f64) -> Result<Self> {
        if beta0 != 1.0 && beta0 != 2.0 {
            return domain(format!("beta0 must be 1 or 2, got {beta0}"));
        }
        Ok(Self { beta0, ..self })
    }

    /// Checks the field invariants of a model built by hand or deserialized.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            MixingKind::Indicator { m: 0 } => {
                return domain("indicator dependence length must be at least 1")
            }
            MixingKind::Polynomial { m0 } if !(m0 > 0.0 && m0.is_finite()) => {
                return domain(format!("polynomial exponent must be positive, got {m0}"))
            }
            _ => {}
        }
        if self.beta0 != 1.0 && self.beta0 != 2.0 {
            return domain(format!("beta0 must be 1 or 2, got {}", self.beta0));
        }
        Ok(())
    }

    /// β(q).
    pub fn beta(&self, q: u64) -> f64 {
        beta_coeff(self, q)
    }

    /// Number of indices 1 ≤ i ≤ q with β(i) ≥ x, for x > 0.
    fn count_tail_at_least(&self, q: u64, x: f64) -> u64 {
        match self.kind {
            MixingKind::Iid => 0,
            MixingKind::Indicator { m } => {
                if x <= 1.0 {
                    q.min(m - 1)
                } else {
                    0
                }
            }
            MixingKind::Polynomial { m0 } => {
                if x > 1.0 || q == 0 {
                    return 0;
                }
                let raw = x.powf(-1.0 / m0) - 1.0;
                let mut i = if raw.is_finite() { raw.floor().max(0.0).min(q as f64) as u64 } else { q };
                while i < q && self.beta(i + 1) >= x {
                    i += 1;
                }
                while i >= 1 && self.beta(i) < x {
                    i -= 1;
                }
                i
            }
        }
    }
}

impl Default for BetaMixingModel {
    fn default() -> Self {
        Self::iid()
    }
}

/// The admissible sample size n = Π p_i^{m_i} over the first υ primes, with
/// its sorted divisor set Q_n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLattice {
    pub upsilon: usize,
    pub primes: Vec<u64>,
    pub n: u64,
    pub qn: Vec<u64>,
}

impl SampleLattice {
    /// Largest admissible prime p_υ.
    pub fn p_upsilon(&self) -> u64 {
        *self.primes.last().expect("lattice has at least one prime")
    }

    /// Smallest element of Q_n that is ≥ x, or `None` when x > n.
    pub fn bracket(&self, x: f64) -> Option<u64> {
        self.qn.iter().copied().find(|&s| s as f64 >= x)
    }

    /// Whether `s` divides n.
    pub fn contains(&self, s: u64) -> bool {
        self.qn.binary_search(&s).is_ok()
    }
}

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Builds the lattice for `n`, rejecting sizes with a prime factor above p_υ.
pub fn build_lattice(n: u64, upsilon: usize) -> Result<SampleLattice> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    if upsilon == 0 {
        return domain("upsilon must be at least 1");
    }
    let primes = first_primes(upsilon);
    let p_upsilon = *primes.last().unwrap();
    let mut rest = n;
    for &p in &primes {
        while rest.is_multiple_of(p) {
            rest /= p;
        }
    }
    if rest != 1 {
        let mut factor = p_upsilon + 1;
        while !rest.is_multiple_of(factor) {
            factor += 1;
        }
        return Err(Error::InadmissibleN { n, factor, p_upsilon });
    }
    let mut qn = Vec::new();
    let mut d = 1u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            qn.push(d);
            if d * d != n {
                qn.push(n / d);
            }
        }
        d += 1;
    }
    qn.sort_unstable();
    Ok(SampleLattice { upsilon, primes, n, qn })
}

/// β(q) for the model; q = 0 returns β(0).
pub fn beta_coeff(model: &BetaMixingModel, q: u64) -> f64 {
    if q == 0 {
        return model.beta0;
    }
    match model.kind {
        MixingKind::Indicator { m } => {
            if q < m {
                1.0
            } else {
                0.0
            }
        }
        MixingKind::Polynomial { m0 } => (1.0 + q as f64).powf(-m0),
        MixingKind::Iid => 0.0,
    }
}

/// μ_q(u) = Σ_{i=0..q} 1{u ≤ 0.5·β(i)}.
pub fn mu_q(model: &BetaMixingModel, q: u64, u: f64) -> Result<u64> {
    if !(u > 0.0 && u <= 1.0) {
        return domain(format!("u must lie in (0, 1], got {u}"));
    }
    Ok(mu_count(model, q, u))
}

fn mu_count(model: &BetaMixingModel, q: u64, u: f64) -> u64 {
    let head = u64::from(u <= 0.5 * model.beta0);
    head + model.count_tail_at_least(q, 2.0 * u)
}

/// The thresholds 0.5·β(i), i = 0..q, clipped to (0, 1], in descending order.
///
/// Zero thresholds are dropped because they never contribute on (0, 1].
fn thresholds_desc(model: &BetaMixingModel, q: u64) -> Vec<f64> {
    let upper = match model.kind {
        MixingKind::Iid => 0,
        MixingKind::Indicator { m } => q.min(m - 1),
        MixingKind::Polynomial { .. } => q,
    };
    let mut t = Vec::with_capacity(upper as usize + 1);
    t.push((0.5 * model.beta0).min(1.0));
    for i in 1..=upper {
        let v = 0.5 * model.beta(i);
        if v > 0.0 {
            t.push(v.min(1.0));
        }
    }
    t
}

/// Exact ∫₀¹ μ_q(u)^a du.
///
/// With thresholds t_0 ≥ t_1 ≥ … the weight equals j on (t_j, t_{j−1}], so the
/// integral is a finite sum. For a = 0 the result is the measure of {μ > 0}.
pub fn mu_integral(model: &BetaMixingModel, q: u64, a: f64) -> f64 {
    let t = thresholds_desc(model, q);
    let mut total = 0.0;
    for j in 1..=t.len() {
        let hi = t[j - 1];
        let lo = if j < t.len() { t[j] } else { 0.0 };
        let len = hi - lo;
        if len > 0.0 {
            total += (j as f64).powf(a) * len;
        }
    }
    total
}

/// q_{n,k} = min{ s ∈ Q_n : 0.5·β(s)·n ≤ s·2^{k+1} }.
pub fn q_nk(model: &BetaMixingModel, lattice: &SampleLattice, k: u32) -> u64 {
    let n = lattice.n as f64;
    let scale = 2f64.powi(k as i32 + 1);
    lattice
        .qn
        .iter()
        .copied()
        .find(|&s| 0.5 * model.beta(s) * n <= s as f64 * scale)
        .unwrap_or(lattice.n)
}

/// Quantile function u ↦ Q_f(u) of |f(Z)|, non-increasing on (0, 1].
#[derive(Clone)]
pub enum QuantileFn {
    /// Closed-form quantile function.
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Sample of |f(Z_i)|; the associated quantile function is the step
    /// function Q(u) = x_(⌈uN⌉) with the sample sorted in descending order.
    Empirical(Vec<f64>),
}

impl std::fmt::Debug for QuantileFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuantileFn::Analytic(_) => f.write_str("QuantileFn::Analytic(..)"),
            QuantileFn::Empirical(v) => write!(f, "QuantileFn::Empirical(len = {})", v.len()),
        }
    }
}

impl QuantileFn {
    /// Builds an empirical quantile function from raw values of f(Z_i).
    pub fn empirical(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return domain("empirical quantile function needs at least one value");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample contains a non-finite value".into()));
        }
        let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        abs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(QuantileFn::Empirical(abs))
    }

    /// Wraps a closed-form quantile function.
    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        QuantileFn::Analytic(Arc::new(f))
    }

    /// Evaluates Q_f(u) for u ∈ (0, 1].
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            QuantileFn::Analytic(f) => f(u),
            QuantileFn::Empirical(x) => {
                let n = x.len();
                let idx = ((u * n as f64).ceil() as usize).clamp(1, n);
                x[idx - 1]
            }
        }
    }
}

/// Absolute tolerance used for the analytic quadratures.
pub const QUADRATURE_TOL: f64 = 1e-10;

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let out = quadrature::double_exponential::integrate(f, a, b, QUADRATURE_TOL);
    if !out.integral.is_finite() {
        return Err(Error::NonFinite(format!("integral over ({a}, {b}] diverged")));
    }
    Ok(out.integral)
}

/// Cumulative weight M(x) = ∫₀ˣ μ_q(u) du = Σ_i min(x, t_i), evaluated with
/// sorted thresholds and prefix sums.
struct CumulativeWeight {
    asc: Vec<f64>,
    prefix: Vec<f64>,
}

impl CumulativeWeight {
    fn new(model: &BetaMixingModel, q: u64) -> Self {
        let mut asc = thresholds_desc(model, q);
        asc.reverse();
        let mut prefix = Vec::with_capacity(asc.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &t in &asc {
            acc += t;
            prefix.push(acc);
        }
        Self { asc, prefix }
    }

    fn at(&self, x: f64) -> f64 {
        let below = self.asc.partition_point(|&t| t < x);
        x * (self.asc.len() - below) as f64 + self.prefix[below]
    }
}

/// ||f||_q = sqrt(2·∫₀¹ μ_q(u)·Q_f(u)² du).
///
/// The empirical case is exact. The analytic case integrates Q_f² on each
/// interval where μ_q is constant with double-exponential quadrature at
/// absolute tolerance [`QUADRATURE_TOL`].
pub fn dep_norm(f: &QuantileFn, model: &BetaMixingModel, q: u64) -> Result<f64> {
    let integral = match f {
        QuantileFn::Empirical(x) => {
            if x.is_empty() {
                return domain("empirical quantile function is empty");
            }
            let cw = CumulativeWeight::new(model, q);
            let n = x.len() as f64;
            let mut acc = 0.0;
            let mut prev = 0.0;
            for (j, &v) in x.iter().enumerate() {
                let next = cw.at((j + 1) as f64 / n);
                acc += v * v * (next - prev);
                prev = next;
            }
            acc
        }
        QuantileFn::Analytic(g) => {
            let t = thresholds_desc(model, q);
            let mut acc = 0.0;
            for j in 1..=t.len() {
                let hi = t[j - 1];
                let lo = if j < t.len() { t[j] } else { 0.0 };
                if hi > lo {
                    acc += j as f64 * integrate(|u| g(u).powi(2), lo, hi)?;
                }
            }
            acc
        }
    };
    let v = (2.0 * integral).sqrt();
    if !v.is_finite() {
        return Err(Error::NonFinite("dependence norm diverged".into()));
    }
    Ok(v)
}

/// ||f||_{L^r} = (∫₀¹ Q_f(u)^r du)^{1/r}.
pub fn lr_norm(f: &QuantileFn, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return domain(format!("r must be at least 1, got {r}"));
    }
    let m = match f {
        QuantileFn::Empirical(x) => x.iter().map(|v| v.powf(r)).sum::<f64>() / x.len() as f64,
        QuantileFn::Analytic(g) => integrate(|u| g(u).powf(r), 0.0, 1.0)?,
    };
    let v = m.powf(1.0 / r);
    if !v.is_finite() {
        return Err(Error::NonFinite("L^r norm diverged".into()));
    }
    Ok(v)
}

/// The effective number of observations and the quantities it is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveN {
    pub value: f64,
    pub q_n0: u64,
    pub mu_integral: f64,
    pub r: f64,
}

/// Computes n(β) for the model on the lattice.
pub fn effective_n(model: &BetaMixingModel, lattice: &SampleLattice, r: f64) -> Result<EffectiveN> {
    if !(r > 2.0) {
        return domain(format!("r must exceed 2, got {r}"));
    }
    let q_n0 = q_nk(model, lattice, 0);
    let a = r / (r - 2.0);
    let integral = mu_integral(model, q_n0, a);
    let value = lattice.n as f64 / (2f64.powf(1.0 - 2.0 / r) * integral.powf((r - 2.0) / r));
    Ok(EffectiveN { value, q_n0, mu_integral: integral, r })
}

/// Exact 𝔹_r(q) = √2·(∫₀¹ μ_q^{r/(r−2)})^{(r−2)/(2r)}.
pub fn b_r_exact(model: &BetaMixingModel, q: u64, r: f64) -> Result<f64> {
    if !(r > 2.0) {
        return domain(format!("r must exceed 2, got {r}"));
    }
    let a = r / (r - 2.0);
    Ok(2f64.sqrt() * mu_integral(model, q, a).powf((r - 2.0) / (2.0 * r)))
}

fn same_exponent(m0: f64, a: f64) -> bool {
    (m0 - a).abs() <= 1e-12 * a.max(1.0)
}

/// Closed-form sandwich (lower, upper) for n(β).
///
/// Indicator models use min{·, m} forms; polynomial models dispatch on m0
/// against r/(r−2). Brackets [x] are resolved over the lattice's Q_n.
pub fn effective_n_bounds(model: &BetaMixingModel, lattice: &SampleLattice, r: f64) -> Result<(f64, f64)> {
    if !(r > 2.0) {
        return domain(format!("r must exceed 2, got {r}"));
    }
    let n = lattice.n as f64;
    let a = r / (r - 2.0);
    let e = (r - 2.0) / r;
    let bracket = |x: f64| -> Result<f64> {
        lattice
            .bracket(x)
            .map(|s| s as f64)
            .ok_or_else(|| Error::Domain(format!("no divisor of {} is ≥ {x}", lattice.n)))
    };
    match model.kind {
        MixingKind::Iid => Err(Error::UnsupportedModel(
            "no closed-form sandwich for the i.i.d. model; use effective_n".into(),
        )),
        MixingKind::Indicator { m } => {
            let m = m as f64;
            let lower = n / (1.0 + bracket(0.25 * n)?).min(1.0 + m);
            let upper = n / (1.0 + 0.25 * n).min(m);
            Ok((lower, upper))
        }
        MixingKind::Polynomial { m0 } => {
            if same_exponent(m0, a) {
                let x = (0.25 * n).powf(1.0 / (m0 + 1.0));
                let lower = n / (m0 * (1.0 + bracket(x)?).ln() + 1.0).powf(1.0 / m0);
                let upper = n / (0.5 * (m0 * (0.5 * (1.0 + x)).ln() + 2f64.powf(m0)).powf(1.0 / m0));
                Ok((lower, upper))
            } else if m0 > a {
                let s = m0 * (r - 2.0);
                let lower = n / (s / (s - r)).powf(e);
                let upper = n / 2f64.powf(-m0).powf(e).max(1.0);
                Ok((lower, upper))
            } else {
                let x = (0.25 * n).powf(1.0 / (m0 + 1.0));
                let t = r - (r - 2.0) * m0;
                let a1 = 0.5f64.powf(t / r) * (2f64.powf(-m0) * m0 * (r - 2.0) / t).powf(e);
                let a0 = (r / t).powf(e);
                let lower = n / ((1.0 + bracket(x)?).powf(t / r) * a0);
                let inner = (1.0 + x).powf(a - m0) - 2f64.powf(a - m0);
                let upper = if inner > 0.0 { n / (inner.powf(e) * a1) } else { f64::INFINITY };
                Ok((lower, upper))
            }
        }
    }
}

/// Closed-form sandwich (lower, upper) for 𝔹_r(q).
pub fn b_r_bounds(model: &BetaMixingModel, q: u64, r: f64) -> Result<(f64, f64)> {
    if !(r > 2.0) {
        return domain(format!("r must exceed 2, got {r}"));
    }
    if q == 0 {
        return domain("q must be at least 1");
    }
    let q = q as f64;
    let a = r / (r - 2.0);
    let c = 2f64.powf(1.0 / r);
    let e = (r - 2.0) / (2.0 * r);
    match model.kind {
        MixingKind::Iid => Err(Error::UnsupportedModel(
            "no closed-form sandwich for the i.i.d. model; use b_r_exact".into(),
        )),
        MixingKind::Indicator { m } => {
            let m = m as f64;
            Ok((c * (1.0 + q).min(m).sqrt(), c * (1.0 + q).min(1.0 + m).sqrt()))
        }
        MixingKind::Polynomial { m0 } => {
            if same_exponent(m0, a) {
                let lower = c * 0.5f64.sqrt() * (m0 * (1.0 + 0.5 * q).ln() + 2f64.powf(m0)).powf(1.0 / (2.0 * m0));
                let upper = c * (m0 * (1.0 + q).ln() + 1.0).powf(1.0 / (2.0 * m0));
                Ok((lower, upper))
            } else if m0 > a {
                Ok((c * 2f64.powf(-m0).powf(e), c * (m0 / (m0 - a)).powf(e)))
            } else {
                let lower = c * (2f64.powf(-m0) * m0 / (a - m0) * ((1.0 + 0.5 * q).powf(a - m0) - 1.0)).powf(e);
                let upper = c * (a / (a - m0)).powf(e) * (1.0 + q).powf((r - (r - 2.0) * m0) / (2.0 * r));
                Ok((lower, upper))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lattice_examples() {
        assert_eq!(build_lattice(64, 2).unwrap().qn, vec![1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(build_lattice(12, 3).unwrap().qn, vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(
            build_lattice(14, 3).unwrap_err(),
            Error::InadmissibleN { n: 14, factor: 7, p_upsilon: 5 }
        );
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn bracket_resolves_over_divisors() {
        let l = build_lattice(64, 2).unwrap();
        assert_eq!(l.bracket(16.0), Some(16));
        assert_eq!(l.bracket(16.5), Some(32));
        assert_eq!(l.bracket(65.0), None);
    }

    #[test]
    fn beta_examples() {
        let ind = BetaMixingModel::indicator(4).unwrap();
        assert_eq!(beta_coeff(&ind, 3), 1.0);
        assert_eq!(beta_coeff(&ind, 4), 0.0);
        let poly = BetaMixingModel::polynomial(3.0).unwrap();
        assert_relative_eq!(beta_coeff(&poly, 1), 0.125);
        let iid2 = BetaMixingModel::iid().with_beta0(2.0).unwrap();
        assert_eq!(beta_coeff(&iid2, 0), 2.0);
        assert!(BetaMixingModel::iid().with_beta0(1.5).is_err());
    }

    #[test]
    fn mu_examples() {
        let ind = BetaMixingModel::indicator(4).unwrap();
        assert_eq!(mu_q(&ind, 10, 0.4).unwrap(), 4);
        assert_eq!(mu_q(&ind, 10, 0.6).unwrap(), 0);
        let iid2 = BetaMixingModel::iid().with_beta0(2.0).unwrap();
        assert_eq!(mu_q(&iid2, 7, 0.9).unwrap(), 1);
        assert!(mu_q(&ind, 3, 0.0).is_err());
        assert!(mu_q(&ind, 3, 1.5).is_err());
    }

    #[test]
    fn mu_count_matches_direct_sum() {
        let models = [
            BetaMixingModel::indicator(5).unwrap(),
            BetaMixingModel::polynomial(0.7).unwrap(),
            BetaMixingModel::polynomial(3.0).unwrap(),
            BetaMixingModel::iid().with_beta0(2.0).unwrap(),
        ];
        for model in &models {
            for q in [0u64, 1, 2, 7, 40] {
                for k in 1..=200 {
                    let u = k as f64 / 200.0;
                    let direct = (0..=q).filter(|&i| u <= 0.5 * model.beta(i)).count() as u64;
                    assert_eq!(mu_q(model, q, u).unwrap(), direct, "{model:?} q={q} u={u}");
                }
            }
        }
    }

    #[test]
    fn mu_integral_examples() {
        let ind = BetaMixingModel::indicator(4).unwrap();
        assert_relative_eq!(mu_integral(&ind, 4, 2.0), 8.0);
        let iid2 = BetaMixingModel::iid().with_beta0(2.0).unwrap();
        assert_relative_eq!(mu_integral(&iid2, 1, 2.0), 1.0);
        assert_relative_eq!(mu_integral(&BetaMixingModel::iid(), 3, 0.0), 0.5);
    }

    #[test]
    fn q_nk_examples() {
        let l = build_lattice(64, 2).unwrap();
        assert_eq!(q_nk(&BetaMixingModel::iid(), &l, 0), 1);
        assert_eq!(q_nk(&BetaMixingModel::indicator(4).unwrap(), &l, 0), 4);
        assert_eq!(q_nk(&BetaMixingModel::indicator(1000).unwrap(), &l, 0), 16);
    }

    #[test]
    fn effective_n_examples() {
        let l = build_lattice(64, 2).unwrap();
        let iid2 = BetaMixingModel::iid().with_beta0(2.0).unwrap();
        assert_relative_eq!(effective_n(&iid2, &l, 4.0).unwrap().value, 64.0 / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(effective_n(&BetaMixingModel::iid(), &l, 4.0).unwrap().value, 64.0, max_relative = 1e-14);
        let e = effective_n(&BetaMixingModel::indicator(4).unwrap(), &l, 4.0).unwrap();
        assert_eq!(e.q_n0, 4);
        assert_relative_eq!(e.mu_integral, 8.0);
        assert_relative_eq!(e.value, 16.0, max_relative = 1e-14);
        assert!(effective_n(&iid2, &l, 2.0).is_err());
    }

    #[test]
    fn effective_n_bounds_examples() {
        let l = build_lattice(64, 2).unwrap();
        let (lo, up) = effective_n_bounds(&BetaMixingModel::indicator(4).unwrap(), &l, 4.0).unwrap();
        assert_relative_eq!(lo, 12.8);
        assert_relative_eq!(up, 16.0);
        let (lo, _) = effective_n_bounds(&BetaMixingModel::polynomial(3.0).unwrap(), &l, 4.0).unwrap();
        assert_relative_eq!(lo, 64.0 / 3f64.sqrt(), max_relative = 1e-14);
        assert!(matches!(
            effective_n_bounds(&BetaMixingModel::iid(), &l, 4.0),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn b_r_bounds_examples() {
        let (_, up) = b_r_bounds(&BetaMixingModel::indicator(4).unwrap(), 4, 4.0).unwrap();
        assert_relative_eq!(up, 2f64.powf(0.25) * 5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(up, 2.659147948, max_relative = 1e-9);
        let (_, up) = b_r_bounds(&BetaMixingModel::polynomial(5.0).unwrap(), 1000, 4.0).unwrap();
        assert_relative_eq!(up, 2f64.powf(0.25) * (5.0f64 / 3.0).powf(0.25), max_relative = 1e-14);
    }

    #[test]
    fn dep_norm_constant_and_l2() {
        let iid2 = BetaMixingModel::iid().with_beta0(2.0).unwrap();
        let c = QuantileFn::empirical(&[3.0; 10]).unwrap();
        assert_relative_eq!(dep_norm(&c, &iid2, 5).unwrap(), 3.0 * 2f64.sqrt(), max_relative = 1e-14);
        let sample = [0.5, -1.0, 2.0, 4.0];
        let f = QuantileFn::empirical(&sample).unwrap();
        let l2 = lr_norm(&f, 2.0).unwrap();
        assert_relative_eq!(dep_norm(&f, &iid2, 9).unwrap(), 2f64.sqrt() * l2, max_relative = 1e-14);
    }

    #[test]
    fn dep_norm_analytic_matches_closed_form() {
        // Q(u) = 1 − u under the indicator model with m = 3 and β(0) = 1:
        // μ_q = 3 on (0, 0.5] so ∫ μ Q² = 3·∫_0^{0.5}(1−u)² du = 3·(7/24).
        let f = QuantileFn::analytic(|u| 1.0 - u);
        let ind = BetaMixingModel::indicator(3).unwrap();
        let expected = (2.0f64 * 3.0 * 7.0 / 24.0).sqrt();
        assert_relative_eq!(dep_norm(&f, &ind, 5).unwrap(), expected, max_relative = 1e-10);
    }
}
