//! Gaussian-complexity constants, bounds on suprema of weighted Gaussian
//! processes over ℓ^q(p) balls, and the variance term of the concentration
//! rate.
//!
//! For ζ_j i.i.d. N(0, 1), weights b_j, p_j > 0 and the ball
//!
//! ```text
//! A = { τ ∈ ℝ^k : ||τ||_{ℓ^q(p)} ≤ R },   ||τ||_{ℓ^q(p)}^q = Σ_j p_j |τ_j|^q
//! ```
//!
//! the expected supremum E[sup_{τ∈A} Σ_j ζ_j √b_j τ_j] is bracketed by
//! closed forms. The inner supremum has a dual-norm solution per draw, which
//! gives an exact Monte Carlo oracle for validating the brackets.
//!
//! The variance term min{ s > 0 : s ≥ 5·max_{x≥1} H(sx)/(sx) } reduces to
//! min{ C·Λ, √(C·B) } when H(s) = (C/5)·min{ Λ·s, B }.

use std::f64::consts::{E, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{domain, Error, Result};

/// Constant inside the logarithm of the lower bound on E[max_j |ζ_j|].
pub fn gauss_max_c1() -> f64 {
    let pp2 = PI + 2.0;
    (1.0 / pp2).exp() / 4.0 * (pp2 / PI).sqrt()
}

/// Scale constant of the lower bound on E[max_j |ζ_j|].
pub const GAUSS_MAX_C2: f64 = 1.0;

/// Which constant multiplies √(max_j b_j p_j^{−2}) in the upper bound on
/// E[max_j |p_j^{−1} √b_j ζ_j|].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussMaxVariant {
    /// √(log 2k), the constant used in the displayed complexity bounds.
    #[default]
    PaperMain,
    /// √(2 log 2k), a valid upper bound for every k ≥ 1.
    ProofSafe,
    /// √(0.5 log 2k); fails already at k = 2.
    PaperLemma,
}

impl GaussMaxVariant {
    fn factor(self, k: usize) -> f64 {
        let l = (2.0 * k as f64).ln();
        match self {
            GaussMaxVariant::PaperMain => l.sqrt(),
            GaussMaxVariant::ProofSafe => (2.0 * l).sqrt(),
            GaussMaxVariant::PaperLemma => (0.5 * l).sqrt(),
        }
    }
}

/// The ball { τ : ||τ||_{ℓ^q(p)} ≤ radius } with Gaussian scale weights b.
///
/// `q = f64::INFINITY` selects the sup-norm ball max_j |τ_j| ≤ radius, for
/// which the penalty weights are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSetSpec {
    pub weights_b: Vec<f64>,
    pub weights_p: Vec<f64>,
    pub q: f64,
    pub radius: f64,
}

impl WeightedSetSpec {
    /// Dimension k.
    pub fn k(&self) -> usize {
        self.weights_b.len()
    }

    /// Checks that weights are positive, lengths agree, q ≥ 1 and radius ≥ 0.
    pub fn validate(&self) -> Result<()> {
        check_weights(&self.weights_p, Some(&self.weights_b))?;
        if !(self.q >= 1.0) {
            return domain(format!("q must be at least 1, got {}", self.q));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return domain(format!("radius must be nonnegative and finite, got {}", self.radius));
        }
        Ok(())
    }
}

fn check_weights(p: &[f64], b: Option<&[f64]>) -> Result<()> {
    if p.is_empty() {
        return domain("dimension k must be at least 1");
    }
    if let Some(b) = b {
        if b.len() != p.len() {
            return Err(Error::ShapeMismatch(format!("{} b-weights for {} p-weights", b.len(), p.len())));
        }
        if b.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return domain("b-weights must be positive and finite");
        }
    }
    if p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return domain("p-weights must be positive and finite");
    }
    Ok(())
}

/// The coefficients (Λ, B, C) entering min{ C·Λ, √(C·B) }.
///
/// `b` may be `f64::INFINITY` when no constant cap is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceInputs {
    pub lambda: f64,
    pub b: f64,
    pub c: f64,
}

impl VarianceInputs {
    /// Returns a copy with the multiplier replaced.
    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }
}

/// Universal constants of the concentration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalConstants {
    pub p_upsilon: u64,
    /// 𝔾₀ = 3·(8.1·p_υ + 8√2); the tail function is u ↦ 𝔾₀/u.
    pub g0: f64,
    /// The chaining constant L, which has no known numeric value.
    pub l_talagrand: f64,
    /// 𝕂 = max{ 1, √2·10·L·(1+τ) } for quantile regression at level τ.
    pub kqr: f64,
}

impl UniversalConstants {
    /// Constants for the largest lattice prime `p_upsilon`, chaining constant
    /// `l_talagrand` and quantile level `tau`.
    pub fn new(p_upsilon: u64, l_talagrand: f64, tau: f64) -> Result<Self> {
        if !(l_talagrand > 0.0) {
            return domain("the chaining constant must be positive");
        }
        if p_upsilon < 2 {
            return domain("p_upsilon must be a prime");
        }
        Ok(Self {
            p_upsilon,
            g0: g0(p_upsilon),
            l_talagrand,
            kqr: (2f64.sqrt() * 10.0 * l_talagrand * (1.0 + tau)).max(1.0),
        })
    }
}

/// 𝔾₀ = 3·(8.1·p_υ + 8√2).
pub fn g0(p_upsilon: u64) -> f64 {
    3.0 * (p_upsilon as f64 * 8.1 + 2f64.sqrt() * 8.0)
}

/// Upper bound on E[max_j |p_j^{−1} √b_j ζ_j|] with the chosen constant.
pub fn gauss_max_bound(p: &[f64], b: &[f64], variant: GaussMaxVariant) -> Result<f64> {
    check_weights(p, Some(b))?;
    let scale = p.iter().zip(b).map(|(&pj, &bj)| bj / (pj * pj)).fold(0.0, f64::max);
    Ok(scale.sqrt() * variant.factor(p.len()))
}

/// Lower bound (max_j p_j)^{−1}·(1 − e^{−1})·√(log(c1·k)/c2) on
/// E[max_j |p_j^{−1} ζ_j|], clamped at 0 when c1·k ≤ 1.
pub fn gauss_max_lower(p: &[f64]) -> Result<f64> {
    check_weights(p, None)?;
    let arg = gauss_max_c1() * p.len() as f64;
    if arg <= 1.0 {
        return Ok(0.0);
    }
    let pmax = p.iter().copied().fold(0.0, f64::max);
    Ok((1.0 - 1.0 / E) * (arg.ln() / GAUSS_MAX_C2).sqrt() / pmax)
}

/// E|ζ|^s = 2^{s/2}·Γ((s+1)/2)/√π for ζ ~ N(0, 1) and s > −1.
pub fn gaussian_abs_moment(s: f64) -> f64 {
    (0.5 * s * 2f64.ln() + ln_gamma(0.5 * (s + 1.0)) - 0.5 * PI.ln()).exp()
}

/// The constant C_{k,q}(p) with E[sup_{τ∈A} Σ ζ_j √b_j τ_j] ≤ C_{k,q}(p)·radius.
pub fn c_kq(q: f64, p: &[f64], b: &[f64], variant: GaussMaxVariant) -> Result<f64> {
    check_weights(p, Some(b))?;
    if !(q >= 1.0) {
        return domain(format!("q must be at least 1, got {q}"));
    }
    if q == 1.0 {
        return gauss_max_bound(p, b, variant);
    }
    if q.is_infinite() {
        return Ok(b.iter().map(|v| v.sqrt()).sum());
    }
    let qs = q / (q - 1.0);
    let sum: f64 = p.iter().zip(b).map(|(&pj, &bj)| bj.powf(0.5 * qs) * pj.powf(-1.0 / (q - 1.0))).sum();
    Ok(gaussian_abs_moment(qs).powf(1.0 / qs) * sum.powf(1.0 / qs))
}

/// Bracket (E|ζ₁|·(Σp_j)^{1/q}, (E|ζ₁|^q)^{1/q}·(Σp_j)^{1/q}) on E||ζ||_{ℓ^q(p)}.
pub fn gauss_lq_moment_bounds(q: f64, p: &[f64]) -> Result<(f64, f64)> {
    check_weights(p, None)?;
    if !(q >= 1.0 && q.is_finite()) {
        return domain(format!("q must be finite and at least 1, got {q}"));
    }
    let s = p.iter().sum::<f64>().powf(1.0 / q);
    Ok(((2.0 / PI).sqrt() * s, gaussian_abs_moment(q).powf(1.0 / q) * s))
}

/// Upper bound C_{k,q}(p)·radius on the expected supremum over the set.
pub fn sup_upper_bound(set: &WeightedSetSpec, variant: GaussMaxVariant) -> Result<f64> {
    set.validate()?;
    Ok(c_kq(set.q, &set.weights_p, &set.weights_b, variant)? * set.radius)
}

/// Lower bound on the expected supremum over the set.
///
/// * q = ∞: radius·k^{−1}·Σ_j √b_j.
/// * q ∈ (1, ∞): K·C_{k,q}(p)·radius with K = (1/(L+1))^{(q−1)/q} and
///   L = 2·(q/(q−1))·2^{q/(2(q−1))}·Γ(q/(2(q−1))).
/// * q = 1: radius times the max-of-Gaussians lower bound with p_j/√b_j in
///   place of p_j.
pub fn sup_lower_bound(set: &WeightedSetSpec) -> Result<f64> {
    set.validate()?;
    let (q, p, b, k) = (set.q, &set.weights_p, &set.weights_b, set.k());
    if q.is_infinite() {
        return Ok(set.radius * b.iter().map(|v| v.sqrt()).sum::<f64>() / k as f64);
    }
    if q == 1.0 {
        let scaled: Vec<f64> = p.iter().zip(b).map(|(&pj, &bj)| pj / bj.sqrt()).collect();
        return Ok(set.radius * gauss_max_lower(&scaled)?);
    }
    let qs = q / (q - 1.0);
    let l = 2.0 * qs * 2f64.powf(0.5 * qs) * gamma(0.5 * qs);
    let kk = (1.0 / (l + 1.0)).powf(1.0 / qs);
    Ok(kk * c_kq(q, p, b, GaussMaxVariant::ProofSafe)? * set.radius)
}

/// Minimum number of draws accepted by [`gauss_sup_oracle`].
pub const ORACLE_MIN_DRAWS: usize = 10_000;

/// Monte Carlo estimate and standard error of E[sup_{τ∈A} Σ_j ζ_j √b_j τ_j].
///
/// Each draw evaluates the supremum exactly through the dual norm:
/// radius·max_j |ξ_j|/p_j for q = 1, radius·Σ_j |ξ_j| for q = ∞ and
/// radius·||(ξ_j p_j^{−1/q})_j||_{q/(q−1)} otherwise, where ξ_j = √b_j ζ_j.
pub fn gauss_sup_oracle(set: &WeightedSetSpec, draws: usize, seed: u64) -> Result<(f64, f64)> {
    set.validate()?;
    if draws < ORACLE_MIN_DRAWS {
        return domain(format!("at least {ORACLE_MIN_DRAWS} draws are required, got {draws}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_b: Vec<f64> = set.weights_b.iter().map(|v| v.sqrt()).collect();
    let q = set.q;
    let qs = if q > 1.0 && q.is_finite() { q / (q - 1.0) } else { 0.0 };
    let pw: Vec<f64> = set.weights_p.iter().map(|&p| if q.is_finite() { p.powf(-1.0 / q) } else { 1.0 }).collect();
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..draws {
        let mut acc = 0.0f64;
        for j in 0..set.k() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let xi = (sqrt_b[j] * z).abs() * pw[j];
            if q == 1.0 {
                acc = acc.max(xi);
            } else if q.is_infinite() {
                acc += xi;
            } else {
                acc += xi.powf(qs);
            }
        }
        if q > 1.0 && q.is_finite() {
            acc = acc.powf(1.0 / qs);
        }
        let v = set.radius * acc;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (draws - 1) as f64;
    Ok((mean, (var / draws as f64).sqrt()))
}

/// Complexity coefficients for an ℓ¹ ball of radius M/λ in dimension d:
/// Λ = √(2·tr W^{−1}) and B = √(log 2d)·M/λ, with multiplier C = 1.
///
/// `log_card` overrides log 2d when the ball has a different number of
/// vertices.
pub fn gamma_bound_l1(d: usize, tr_winv: f64, m_over_lambda: f64, log_card: Option<f64>) -> Result<VarianceInputs> {
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    if !(tr_winv >= 0.0 && m_over_lambda >= 0.0) {
        return domain("trace and radius must be nonnegative");
    }
    let lc = log_card.unwrap_or_else(|| (2.0 * d as f64).ln());
    Ok(VarianceInputs { lambda: (2.0 * tr_winv).sqrt(), b: lc.sqrt() * m_over_lambda, c: 1.0 })
}

/// Complexity coefficients for the weighted ℓ²(p) penalty with p_j = j^m.
///
/// For m > 1, Λ = √(min{ λ^{−1/m}·((1/(m−1))/(2·avg))^{1/m}, d }·2·avg) where
/// avg is the largest prefix mean of diag W^{−1}. For m ∈ [0, 1],
/// Λ = √(min{ λ^{−1}·d^{1−m}/(1−m), 2·tr W^{−1} }), the first entry being
/// infinite at m = 1. No constant cap is available, so B = ∞. When
/// `diag_winv` is empty, avg falls back to 1/e_min(W).
pub fn gamma_bound_l2p(d: usize, m: f64, lambda: f64, emin_w: f64, diag_winv: &[f64]) -> Result<VarianceInputs> {
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    if !(m >= 0.0) {
        return domain(format!("penalty exponent must be nonnegative, got {m}"));
    }
    if !(lambda > 0.0) {
        return domain("lambda must be positive");
    }
    if !(emin_w > 0.0) {
        return domain("the smallest eigenvalue of W must be positive");
    }
    if !diag_winv.is_empty() && diag_winv.len() != d {
        return Err(Error::ShapeMismatch(format!("{} diagonal entries for d = {d}", diag_winv.len())));
    }
    let (avg, trace) = if diag_winv.is_empty() {
        (1.0 / emin_w, d as f64 / emin_w)
    } else {
        let mut best = 0.0f64;
        let mut acc = 0.0;
        for (i, v) in diag_winv.iter().enumerate() {
            acc += v;
            best = best.max(acc / (i + 1) as f64);
        }
        (best, acc)
    };
    let lam = if m > 1.0 {
        let a = lambda.powf(-1.0 / m) * ((1.0 / (m - 1.0)) / (2.0 * avg)).powf(1.0 / m);
        (a.min(d as f64) * 2.0 * avg).sqrt()
    } else {
        let first = if m < 1.0 { (d as f64).powf(1.0 - m) / ((1.0 - m) * lambda) } else { f64::INFINITY };
        first.min(2.0 * trace).sqrt()
    };
    Ok(VarianceInputs { lambda: lam, b: f64::INFINITY, c: 1.0 })
}

/// min{ C·Λ, √(C·B) }.
pub fn variance_term(inputs: &VarianceInputs) -> f64 {
    (inputs.c * inputs.lambda).min((inputs.c * inputs.b).sqrt())
}

/// Ratio of the geometric grid over x ≥ 1 in [`variance_term_fixed_point`].
pub const X_GRID_RATIO: f64 = 1.05;
/// Right end of the geometric grid over x ≥ 1.
pub const X_GRID_MAX: f64 = 1e6;

fn sup_ratio(h: &dyn Fn(f64) -> f64, s: f64) -> f64 {
    let mut x = 1.0;
    let mut best = 0.0f64;
    while x <= X_GRID_MAX {
        best = best.max(h(s * x) / (s * x));
        x *= X_GRID_RATIO;
    }
    5.0 * best
}

/// Smallest s ∈ [tol, s_max] with s ≥ 5·max_{x≥1} H(sx)/(sx), to within tol.
///
/// The inner maximum runs over the geometric grid x = 1, 1.05, 1.05², … up
/// to [`X_GRID_MAX`]. The map s ↦ max_x H(sx)/(sx) must be non-increasing;
/// this is checked on 33 geometric sample points before bisection.
pub fn variance_term_fixed_point(h: &dyn Fn(f64) -> f64, s_max: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && s_max > tol) {
        return domain("need 0 < tol < s_max");
    }
    let samples = 33;
    let ratio = (s_max / tol).powf(1.0 / (samples - 1) as f64);
    let mut prev = f64::INFINITY;
    let mut s = tol;
    for _ in 0..samples {
        let g = sup_ratio(h, s);
        if !g.is_finite() || g < 0.0 {
            return Err(Error::NonFinite(format!("H(s)/s is not a nonnegative number at s = {s}")));
        }
        if g > prev * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::MonotonicityViolation(format!("max_x H(sx)/(sx) increases near s = {s}")));
        }
        prev = g;
        s *= ratio;
    }
    let ok = |s: f64| s >= sup_ratio(h, s);
    if ok(tol) {
        return Ok(tol);
    }
    if !ok(s_max) {
        return Err(Error::NoSolution(format!("s_max = {s_max} does not satisfy the inequality")));
    }
    let (mut lo, mut hi) = (tol, s_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_max_examples() {
        let one = [1.0, 1.0];
        assert_relative_eq!(gauss_max_bound(&one, &one, GaussMaxVariant::PaperMain).unwrap(), 4f64.ln().sqrt());
        assert_relative_eq!(gauss_max_bound(&one, &one, GaussMaxVariant::ProofSafe).unwrap(), 1.6651092, max_relative = 1e-7);
        let v = gauss_max_bound(&[1.0], &[1.0], GaussMaxVariant::ProofSafe).unwrap();
        assert!(v >= (2.0 / PI).sqrt());
        assert!(gauss_max_bound(&[], &[], GaussMaxVariant::ProofSafe).is_err());
    }

    #[test]
    fn gauss_max_lower_examples() {
        assert_relative_eq!(gauss_max_c1(), 0.388491, max_relative = 1e-5);
        assert_eq!(gauss_max_lower(&[1.0, 1.0]).unwrap(), 0.0);
        let base = gauss_max_lower(&[1.0; 100]).unwrap();
        assert!(base > 0.0);
        assert_relative_eq!(gauss_max_lower(&[3.0; 100]).unwrap(), base / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn c_kq_examples() {
        assert_relative_eq!(c_kq(f64::INFINITY, &[1.0; 3], &[1.0; 3], GaussMaxVariant::PaperMain).unwrap(), 3.0);
        assert_relative_eq!(c_kq(2.0, &[1.0; 4], &[1.0; 4], GaussMaxVariant::PaperMain).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(c_kq(1.0, &[1.0; 2], &[1.0; 2], GaussMaxVariant::PaperMain).unwrap(), 4f64.ln().sqrt());
        assert!(c_kq(0.5, &[1.0], &[1.0], GaussMaxVariant::PaperMain).is_err());
    }

    #[test]
    fn abs_moments() {
        assert_relative_eq!(gaussian_abs_moment(1.0), (2.0 / PI).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(gaussian_abs_moment(2.0), 1.0, max_relative = 1e-13);
        assert_relative_eq!(gaussian_abs_moment(4.0), 3.0, max_relative = 1e-13);
    }

    #[test]
    fn lq_bounds_examples() {
        let (lo, up) = gauss_lq_moment_bounds(1.0, &[1.0]).unwrap();
        assert_relative_eq!(lo, (2.0 / PI).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(up, (2.0 / PI).sqrt(), max_relative = 1e-13);
        let (lo, up) = gauss_lq_moment_bounds(2.0, &[1.0; 4]).unwrap();
        assert_relative_eq!(lo, 2.0 * (2.0 / PI).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(up, 2.0, max_relative = 1e-13);
    }

    #[test]
    fn oracle_examples() {
        let set = WeightedSetSpec { weights_b: vec![1.0; 3], weights_p: vec![1.0; 3], q: f64::INFINITY, radius: 1.0 };
        let (est, se) = gauss_sup_oracle(&set, 200_000, 1).unwrap();
        assert!((est - 3.0 * (2.0 / PI).sqrt()).abs() < 4.0 * se);
        let set = WeightedSetSpec { weights_b: vec![1.0; 2], weights_p: vec![1.0; 2], q: 1.0, radius: 1.0 };
        let (est, se) = gauss_sup_oracle(&set, 200_000, 2).unwrap();
        // E max(|ζ₁|, |ζ₂|) = 2/√π.
        assert!((est - 2.0 / PI.sqrt()).abs() < 4.0 * se);
        let zero = WeightedSetSpec { radius: 0.0, ..set.clone() };
        assert_eq!(gauss_sup_oracle(&zero, 10_000, 3).unwrap().0, 0.0);
        assert!(gauss_sup_oracle(&set, 100, 3).is_err());
    }

    #[test]
    fn oracle_is_deterministic() {
        let set = WeightedSetSpec { weights_b: vec![1.0, 2.0], weights_p: vec![1.0, 4.0], q: 1.5, radius: 2.0 };
        assert_eq!(gauss_sup_oracle(&set, 10_000, 9).unwrap(), gauss_sup_oracle(&set, 10_000, 9).unwrap());
    }

    #[test]
    fn gamma_l1_examples() {
        let v = gamma_bound_l1(3, 3.0, 10.0, None).unwrap();
        assert_relative_eq!(v.lambda, 6f64.sqrt());
        assert_relative_eq!(v.b, 6f64.ln().sqrt() * 10.0);
        assert_eq!(variance_term(&gamma_bound_l1(3, 3.0, 0.0, None).unwrap()), 0.0);
        assert_relative_eq!(gamma_bound_l1(1, 1.0, 1.0, None).unwrap().b, 2f64.ln().sqrt());
    }

    #[test]
    fn gamma_l2p_branches() {
        // m = 0 with λ ≤ d/(2 tr W^{-1}) hits the trace cap.
        let diag = [1.0, 2.0, 0.5];
        let v = gamma_bound_l2p(3, 0.0, 0.1, 0.5, &diag).unwrap();
        assert_relative_eq!(v.lambda, (2.0f64 * 3.5).sqrt());
        // m > 1 with large λ uses the λ-branch.
        let v = gamma_bound_l2p(50, 2.0, 100.0, 1.0, &[1.0; 50]).unwrap();
        let a = 100f64.powf(-0.5) * (1.0f64 / 2.0).powf(0.5);
        assert_relative_eq!(v.lambda, (a * 2.0f64).sqrt());
        assert!(v.b.is_infinite());
        // d = 1 with unit weights: the λ-branch is capped at d in both cases.
        let hi = gamma_bound_l2p(1, 2.0, 1e-6, 1.0, &[1.0]).unwrap();
        let lo = gamma_bound_l2p(1, 0.5, 1e-6, 1.0, &[1.0]).unwrap();
        assert_relative_eq!(hi.lambda, 2f64.sqrt());
        assert_relative_eq!(lo.lambda, 2f64.sqrt());
        assert!(gamma_bound_l2p(3, -1.0, 1.0, 1.0, &[]).is_err());
    }

    #[test]
    fn l2p_rate_shape() {
        // With λ = n^{−m/(m+1)} and a large dimension, C·Λ with C = n^{−1/2}
        // scales like n^{−m/(2(m+1))}.
        let m = 3.0;
        let term = |n: f64| {
            let lam = n.powf(-m / (m + 1.0));
            let v = gamma_bound_l2p(100_000, m, lam, 1.0, &[]).unwrap().with_c(n.powf(-0.5));
            variance_term(&v)
        };
        let slope = (term(1e6) / term(1e4)).ln() / 100f64.ln();
        assert_relative_eq!(slope, -m / (2.0 * (m + 1.0)), max_relative = 1e-10);
    }

    #[test]
    fn variance_term_examples() {
        assert_eq!(variance_term(&VarianceInputs { lambda: 2.0, b: 1.0, c: 1.0 }), 1.0);
        assert_eq!(variance_term(&VarianceInputs { lambda: 2.0, b: 0.0, c: 1.0 }), 0.0);
        assert_eq!(variance_term(&VarianceInputs { lambda: 1.0, b: 4.0, c: 4.0 }), 4.0);
    }

    #[test]
    fn fixed_point_examples() {
        let tol = 1e-9;
        // Linear H: max_x H(sx)/(sx) = Λ for every s, so the answer is Λ.
        let lam = 0.3;
        let s = variance_term_fixed_point(&|s| lam * s / 5.0, 10.0, tol).unwrap();
        assert!((s - lam).abs() <= 2.0 * tol);
        // A linear H with a tiny slope is satisfied at the left end.
        assert_eq!(variance_term_fixed_point(&|s| 1e-12 * s, 10.0, tol).unwrap(), tol);
        let b = 2.0;
        let s = variance_term_fixed_point(&|_| b, 100.0, tol).unwrap();
        assert!((s - (5.0f64 * b).sqrt()).abs() <= 2.0 * tol);
        for (c, l, bb) in [(1.0, 2.0, 1.0), (4.0, 1.0, 4.0), (0.5, 0.1, 3.0)] {
            let s = variance_term_fixed_point(&|s: f64| c / 5.0 * (l * s).min(bb), 100.0, tol).unwrap();
            let closed = variance_term(&VarianceInputs { lambda: l, b: bb, c });
            assert!((s - closed).abs() <= 2.0 * tol, "{s} vs {closed}");
        }
        assert!(matches!(variance_term_fixed_point(&|_| 1e6, 1.0, tol), Err(Error::NoSolution(_))));
        assert!(matches!(
            variance_term_fixed_point(&|s: f64| s * s, 10.0, tol),
            Err(Error::MonotonicityViolation(_))
        ));
    }

    #[test]
    fn g0_values() {
        assert_relative_eq!(g0(2), 3.0 * (16.2 + 8.0 * 2f64.sqrt()), max_relative = 1e-14);
        assert_relative_eq!(g0(2), 82.54, max_relative = 1e-4);
        for p in crate::mixing_lattice::first_primes(20) {
            assert!(g0(p) > 33.0);
        }
        let k = UniversalConstants::new(5, 1.0, 0.5).unwrap();
        assert_relative_eq!(k.kqr, 2f64.sqrt() * 15.0);
    }
}
