//! Regularized M-estimators, population distances and bias terms.
//!
//! The penalized criterion is
//!
//! ```text
//! Q(θ) = n^{−1} Σ_i φ(y_i − x_i'θ) + λ·Pen(θ)
//! ```
//!
//! with φ the check loss ρ_τ(t) = t·(τ − 1{t < 0}), the half absolute loss
//! 0.5|t| (equal to ρ_{0.5}) or the squared loss t², and Pen either ||θ||₁
//! or Σ_j j^m θ_j².
//!
//! [`fit_penalized`] runs over-relaxed ADMM on the splitting
//! Xθ + r = y, θ = w, with the θ-step solved through one Cholesky factor of
//! X'X + I. For the check loss the iterate is periodically polished onto the
//! exact piecewise-linear solution (interpolating the rows with the smallest
//! residuals) and accepted only once the subgradient residual
//!
//! ```text
//! dist(0, −n^{−1} Σ_i x_i ∂ρ_τ(r_i) + λ ∂Pen(θ))
//! ```
//!
//! is below the tolerance. The distance is a box-constrained least-squares
//! problem over the free subgradients and is solved by coordinate descent.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dependent_datagen::{np_transform, np_truth, stream_variance, ERROR_SCALE, NOISE_MIX};
use crate::error::{domain, Error, Result};

/// Loss function φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// Check loss at level τ ∈ (0, 1).
    Quantile { tau: f64 },
    /// 0.5|t|, the check loss at τ = 0.5.
    AbsoluteHalf,
    /// t².
    Squared,
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if let LossSpec::Quantile { tau } = *self {
            if !(tau > 0.0 && tau < 1.0) {
                return domain(format!("quantile level must lie in (0, 1), got {tau}"));
            }
        }
        Ok(())
    }

    /// The quantile level, or `None` for the squared loss.
    pub fn tau(&self) -> Option<f64> {
        match *self {
            LossSpec::Quantile { tau } => Some(tau),
            LossSpec::AbsoluteHalf => Some(0.5),
            LossSpec::Squared => None,
        }
    }

    /// φ(t).
    pub fn value(&self, t: f64) -> f64 {
        match self.tau() {
            Some(tau) => t * (tau - if t < 0.0 { 1.0 } else { 0.0 }),
            None => t * t,
        }
    }
}

/// Penalty family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyKind {
    None,
    L1,
    /// Σ_j p_j θ_j² with p_j = j^m.
    WeightedL2 { m: f64 },
}

/// Penalty family together with its level λ ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn none() -> Self {
        Self { kind: PenaltyKind::None, lambda: 0.0 }
    }

    pub fn l1(lambda: f64) -> Self {
        Self { kind: PenaltyKind::L1, lambda }
    }

    pub fn weighted_l2(m: f64, lambda: f64) -> Self {
        Self { kind: PenaltyKind::WeightedL2 { m }, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return domain(format!("lambda must be nonnegative and finite, got {}", self.lambda));
        }
        if let PenaltyKind::WeightedL2 { m } = self.kind {
            if !(m >= 0.0 && m.is_finite()) {
                return domain(format!("weight exponent must be nonnegative, got {m}"));
            }
        }
        Ok(())
    }

    /// The weights p_j = j^m, j = 1..d (all ones for other kinds).
    pub fn weights(&self, d: usize) -> Vec<f64> {
        match self.kind {
            PenaltyKind::WeightedL2 { m } => (1..=d).map(|j| (j as f64).powf(m)).collect(),
            _ => vec![1.0; d],
        }
    }

    /// Pen(θ), without the factor λ.
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::L1 => theta.iter().map(|v| v.abs()).sum(),
            PenaltyKind::WeightedL2 { .. } => {
                self.weights(theta.len()).iter().zip(theta.iter()).map(|(p, t)| p * t * t).sum()
            }
        }
    }
}

/// Result of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub theta: DVector<f64>,
    /// Criterion value at `theta`.
    pub objective: f64,
    /// Subgradient distance to zero, or gradient norm for smooth criteria.
    pub optimality_residual: f64,
    pub iterations: usize,
}

/// Options of the ADMM solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Required optimality residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// Initial augmented-Lagrangian parameter.
    pub rho: f64,
    /// Iterations between polishing and certification attempts.
    pub check_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50_000, alpha: 1.6, rho: 1.0, check_every: 25 }
    }
}

fn check_data(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} rows in X but {} responses", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return domain("need at least one observation");
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data contain non-finite entries".into()));
    }
    Ok(())
}

/// n^{−1} Σ_i φ(y_i − x_i'θ) + λ·Pen(θ).
pub fn empirical_criterion(loss: LossSpec, pen: PenaltySpec, x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
    check_data(x, y)?;
    if x.ncols() != theta.len() {
        return Err(Error::ShapeMismatch(format!("{} columns in X but {} coefficients", x.ncols(), theta.len())));
    }
    let r = y - x * theta;
    let fit = r.iter().map(|&t| loss.value(t)).sum::<f64>() / y.len() as f64;
    Ok(fit + pen.lambda * pen.value(theta))
}

/// Penalized quantile regression at level `tau`.
pub fn fit_penalized_qr(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64, pen: PenaltySpec, opts: &SolverOptions) -> Result<Fit> {
    fit_penalized(x, y, LossSpec::Quantile { tau }, pen, opts)
}

/// Minimizes the penalized criterion for any loss and penalty.
pub fn fit_penalized(x: &DMatrix<f64>, y: &DVector<f64>, loss: LossSpec, pen: PenaltySpec, opts: &SolverOptions) -> Result<Fit> {
    check_data(x, y)?;
    loss.validate()?;
    pen.validate()?;
    if !(opts.alpha > 0.0 && opts.alpha < 2.0 && opts.rho > 0.0 && opts.tol > 0.0) {
        return domain("solver options need alpha in (0, 2), rho > 0 and tol > 0");
    }
    Admm::new(x, y, loss, pen, opts).run()
}

struct Admm<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    loss: LossSpec,
    pen: PenaltySpec,
    opts: &'a SolverOptions,
    weights: Vec<f64>,
}

impl<'a> Admm<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, loss: LossSpec, pen: PenaltySpec, opts: &'a SolverOptions) -> Self {
        let weights = pen.weights(x.ncols());
        Self { x, y, loss, pen, opts, weights }
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn run(&self) -> Result<Fit> {
        let (x, y) = (self.x, self.y);
        let (n, d) = (x.nrows(), x.ncols());
        let nf = self.n();
        let xt = x.transpose();
        let mut gram = &xt * x;
        for j in 0..d {
            gram[(j, j)] += 1.0;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::SingularDesign("X'X + I is not positive definite".into()))?;
        let alpha = self.opts.alpha;
        let mut rho = self.opts.rho;
        let mut theta: DVector<f64>;
        let mut w = DVector::<f64>::zeros(d);
        let mut r = y.clone();
        let mut u = DVector::<f64>::zeros(n);
        let mut v = DVector::<f64>::zeros(d);
        let mut best: Option<Fit> = None;
        let first_checks = [5usize, 10];
        for it in 1..=self.opts.max_iter {
            let rhs = &xt * (y - &r - &u) + (&w - &v);
            theta = chol.solve(&rhs);
            let xtheta = x * &theta;
            let xh = &xtheta * alpha + (y - &r) * (1.0 - alpha);
            let th = &theta * alpha + &w * (1.0 - alpha);
            let r_old = r.clone();
            let w_old = w.clone();
            let kappa = 1.0 / rho;
            r = (y - &xh - &u).map(|a| self.prox_loss(a, kappa, rho));
            let a = &th + &v;
            w = DVector::from_fn(d, |j, _| self.prox_pen(a[j], j, nf, rho));
            u += &xh + &r - y;
            v += &th - &w;

            if it % 10 == 0 {
                let primal = ((&xtheta + &r - y).norm_squared() + (&theta - &w).norm_squared()).sqrt();
                let dual = rho * (&xt * (&r - &r_old) - (&w - &w_old)).norm();
                if primal > 10.0 * dual {
                    rho *= 2.0;
                    u /= 2.0;
                    v /= 2.0;
                } else if dual > 10.0 * primal {
                    rho /= 2.0;
                    u *= 2.0;
                    v *= 2.0;
                }
            }

            if it % self.opts.check_every == 0 || first_checks.contains(&it) || it == self.opts.max_iter {
                for cand in self.candidates(&w) {
                    let res = self.certificate(&cand);
                    if best.as_ref().is_none_or(|b| res < b.optimality_residual) {
                        let objective = empirical_criterion(self.loss, self.pen, x, y, &cand)?;
                        best = Some(Fit { theta: cand, objective, optimality_residual: res, iterations: it });
                    }
                }
                if let Some(b) = &best {
                    if b.optimality_residual <= self.opts.tol {
                        return Ok(Fit { iterations: it, ..b.clone() });
                    }
                }
            }
        }
        let residual = best.map_or(f64::INFINITY, |b| b.optimality_residual);
        Err(Error::NonConvergence { iterations: self.opts.max_iter, residual })
    }

    /// Proximal map of φ with step κ = 1/ρ.
    fn prox_loss(&self, a: f64, kappa: f64, rho: f64) -> f64 {
        match self.loss.tau() {
            Some(tau) => {
                if a > tau * kappa {
                    a - tau * kappa
                } else if a < -(1.0 - tau) * kappa {
                    a + (1.0 - tau) * kappa
                } else {
                    0.0
                }
            }
            None => rho * a / (2.0 + rho),
        }
    }

    /// Proximal map of nλ·Pen restricted to coordinate j.
    fn prox_pen(&self, a: f64, j: usize, n: f64, rho: f64) -> f64 {
        let nl = n * self.pen.lambda;
        match self.pen.kind {
            PenaltyKind::None => a,
            PenaltyKind::L1 => {
                let t = nl / rho;
                a.signum() * (a.abs() - t).max(0.0)
            }
            PenaltyKind::WeightedL2 { .. } => rho * a / (rho + 2.0 * nl * self.weights[j]),
        }
    }

    fn residual_tolerance(&self) -> f64 {
        1e-9 * (1.0 + self.y.amax())
    }

    /// The iterate itself and its polished versions.
    fn candidates(&self, w: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = vec![w.clone()];
        let Some(tau) = self.loss.tau() else {
            out.extend(self.squared_polish(w));
            return out;
        };
        let (x, y) = (self.x, self.y);
        let d = x.ncols();
        let smooth_pen = matches!(self.pen.kind, PenaltyKind::WeightedL2 { .. }) && self.pen.lambda > 0.0;
        if !smooth_pen {
            if let Some(theta) = self.vertex_polish(w, tau) {
                out.push(theta);
            }
            return out;
        }
        let resid = y - x * w;
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()));
        let all: Vec<usize> = (0..d).collect();
        let rows = independent_rows(x, &all, &order);
        for h in 0..=rows.len() {
            if let Some(theta) = self.smooth_kkt(&rows[..h], &resid, tau) {
                out.push(theta);
            }
        }
        out
    }

    /// Stationary point of the squared-loss criterion on the support of `w`,
    /// with the signs of `w` fixing the ℓ¹ subgradient there.
    fn squared_polish(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        let (x, y) = (self.x, self.y);
        let d = x.ncols();
        let nl = self.n() * self.pen.lambda;
        let scale = w.amax().max(1.0);
        let support: Vec<usize> = match self.pen.kind {
            PenaltyKind::L1 => (0..d).filter(|&j| w[j].abs() > 1e-8 * scale).collect(),
            _ => (0..d).collect(),
        };
        if support.is_empty() {
            return Some(DVector::zeros(d));
        }
        let xs = x.select_columns(&support);
        let mut a = xs.transpose() * &xs;
        let mut b = xs.transpose() * y;
        for (i, &j) in support.iter().enumerate() {
            match self.pen.kind {
                PenaltyKind::L1 => b[i] -= 0.5 * nl * w[j].signum(),
                PenaltyKind::WeightedL2 { .. } => a[(i, i)] += nl * self.weights[j],
                PenaltyKind::None => {}
            }
        }
        let sol = a.cholesky()?.solve(&b);
        let mut theta = DVector::zeros(d);
        for (i, &j) in support.iter().enumerate() {
            theta[j] = sol[i];
        }
        Some(theta)
    }

    /// Exact minimizer of the piecewise-linear criterion by edge descent
    /// between vertices, started from the rows with the smallest residuals
    /// at `w`. An ℓ¹ penalty enters as d pseudo-rows e_j with response 0 and
    /// slope nλ on both sides.
    fn vertex_polish(&self, w: &DVector<f64>, tau: f64) -> Option<DVector<f64>> {
        let (x, y) = (self.x, self.y);
        let (n, d) = x.shape();
        let pseudo = matches!(self.pen.kind, PenaltyKind::L1) && self.pen.lambda > 0.0;
        let rows = if pseudo { n + d } else { n };
        let a = if pseudo {
            let mut a = DMatrix::zeros(rows, d);
            a.rows_mut(0, n).copy_from(x);
            for j in 0..d {
                a[(n + j, j)] = 1.0;
            }
            a
        } else {
            x.clone()
        };
        let b = DVector::from_fn(rows, |i, _| if i < n { y[i] } else { 0.0 });
        let nl = self.n() * self.pen.lambda;
        let slopes: Vec<(f64, f64)> = (0..rows).map(|i| if i < n { (tau, 1.0 - tau) } else { (nl, nl) }).collect();
        let resid = &b - &a * w;
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&p, &q| resid[p].abs().total_cmp(&resid[q].abs()));
        let all: Vec<usize> = (0..d).collect();
        let basis = independent_rows(&a, &all, &order);
        if basis.len() < d {
            return None;
        }
        let mut theta = vertex_descent(&a, &b, &slopes, basis, 20 * rows + 100)?;
        if pseudo {
            for j in 0..d {
                if theta[j].abs() <= 1e-12 * (1.0 + theta.amax()) {
                    theta[j] = 0.0;
                }
            }
        }
        Some(theta)
    }

    /// Solves 2λPθ − n^{−1}X_H'g_H = n^{−1}X_{H^c}'g_{H^c}, X_Hθ = y_H with the
    /// subgradients off H fixed by the residual signs.
    fn smooth_kkt(&self, rows: &[usize], resid: &DVector<f64>, tau: f64) -> Option<DVector<f64>> {
        let (x, y) = (self.x, self.y);
        let (d, h, n) = (x.ncols(), rows.len(), self.n());
        let mut a = DMatrix::zeros(d + h, d + h);
        let mut b = DVector::zeros(d + h);
        for j in 0..d {
            a[(j, j)] = 2.0 * self.pen.lambda * self.weights[j];
        }
        let in_h: std::collections::HashSet<usize> = rows.iter().copied().collect();
        for i in 0..y.len() {
            if in_h.contains(&i) {
                continue;
            }
            let g = if resid[i] > 0.0 { tau } else { tau - 1.0 };
            for j in 0..d {
                b[j] += x[(i, j)] * g / n;
            }
        }
        for (c, &i) in rows.iter().enumerate() {
            for j in 0..d {
                a[(j, d + c)] = -x[(i, j)] / n;
                a[(d + c, j)] = x[(i, j)];
            }
            b[d + c] = y[i];
        }
        let sol = a.lu().solve(&b)?;
        Some(sol.rows(0, d).into_owned())
    }

    /// Distance from zero to the subdifferential of the averaged criterion.
    fn certificate(&self, theta: &DVector<f64>) -> f64 {
        let (x, y) = (self.x, self.y);
        let (d, n) = (x.ncols(), self.n());
        let lam = self.pen.lambda;
        let resid = y - x * theta;
        let mut c = DVector::<f64>::zeros(d);
        let mut free_cols: Vec<(DVector<f64>, f64, f64)> = Vec::new();
        match self.loss.tau() {
            None => {
                c -= x.transpose() * &resid * (2.0 / n);
            }
            Some(tau) => {
                let eps = self.residual_tolerance();
                for i in 0..y.len() {
                    let col = x.row(i).transpose() * (-1.0 / n);
                    if resid[i].abs() <= eps {
                        free_cols.push((col, tau - 1.0, tau));
                    } else {
                        let g = if resid[i] > 0.0 { tau } else { tau - 1.0 };
                        c += col * g;
                    }
                }
            }
        }
        match self.pen.kind {
            PenaltyKind::None => {}
            PenaltyKind::L1 => {
                for j in 0..d {
                    if theta[j] != 0.0 {
                        c[j] += lam * theta[j].signum();
                    } else if lam > 0.0 {
                        free_cols.push((DVector::from_fn(d, |k, _| if k == j { lam } else { 0.0 }), -1.0, 1.0));
                    }
                }
            }
            PenaltyKind::WeightedL2 { .. } => {
                for j in 0..d {
                    c[j] += 2.0 * lam * self.weights[j] * theta[j];
                }
            }
        }
        box_least_squares(&c, &free_cols)
    }
}

/// Minimizes Σ_i c_i(b_i − a_i'θ) with c_i(r) = s⁺_i·r for r > 0 and
/// −s⁻_i·r for r < 0, moving along edges between vertices (θ interpolating
/// d rows) until no edge descends. Returns `None` if the pivot budget runs out
/// or a basis matrix turns singular.
fn vertex_descent(a: &DMatrix<f64>, b: &DVector<f64>, slopes: &[(f64, f64)], mut basis: Vec<usize>, max_pivots: usize) -> Option<DVector<f64>> {
    let (rows, d) = a.shape();
    let scale = 1e-12 * (1.0 + b.amax());
    let mut in_basis = vec![false; rows];
    for &h in &basis {
        in_basis[h] = true;
    }
    for _ in 0..max_pivots {
        let ah = DMatrix::from_fn(d, d, |r, c| a[(basis[r], c)]);
        let inv = ah.try_inverse()?;
        let theta = &inv * DVector::from_fn(d, |r, _| b[basis[r]]);
        let resid = b - a * &theta;
        // Column k of Z holds a_i'δ_k for the edge δ_k = inv·e_k, along which
        // the residual of basis row k moves by −t and the others stay at 0.
        let z = a * &inv;
        let mut best: Option<(usize, f64, f64)> = None;
        for k in 0..d {
            for sigma in [1.0, -1.0] {
                // Along θ + t·σ·δ_k the residual of row i changes by −t·σ·z_ik.
                let (sp, sm) = slopes[basis[k]];
                let mut g = if sigma > 0.0 { sm } else { sp };
                for i in 0..rows {
                    if in_basis[i] {
                        continue;
                    }
                    let s = -sigma * z[(i, k)];
                    let (p, m) = slopes[i];
                    g += if resid[i] > scale {
                        p * s
                    } else if resid[i] < -scale {
                        -m * s
                    } else if s > 0.0 {
                        p * s
                    } else {
                        -m * s
                    };
                }
                if g < -1e-12 && best.is_none_or(|(_, _, bg)| g < bg) {
                    best = Some((k, sigma, g));
                }
            }
        }
        let Some((k, sigma, g)) = best else { return Some(theta) };
        let mut breaks: Vec<(f64, usize, f64)> = Vec::new();
        for i in 0..rows {
            if in_basis[i] || resid[i].abs() <= scale {
                continue;
            }
            let s = -sigma * z[(i, k)];
            if s != 0.0 && (resid[i] > 0.0) != (s > 0.0) {
                let (p, m) = slopes[i];
                breaks.push((-resid[i] / s, i, (p + m) * s.abs()));
            }
        }
        breaks.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut slope = g;
        let mut enter = None;
        for (_, i, inc) in breaks {
            slope += inc;
            if slope >= 0.0 {
                enter = Some(i);
                break;
            }
        }
        let i = enter?;
        in_basis[basis[k]] = false;
        in_basis[i] = true;
        basis[k] = i;
    }
    None
}

/// min ||c + Σ_k a_k t_k|| over t_k ∈ [lo_k, hi_k], by a feasible active-set
/// method: least squares on the free variables, a step back to the box when
/// that solution leaves it, and release of bound variables whose gradient
/// points inward.
fn box_least_squares(c: &DVector<f64>, cols: &[(DVector<f64>, f64, f64)]) -> f64 {
    let k = cols.len();
    if k == 0 {
        return c.norm();
    }
    let d = c.len();
    let a = DMatrix::from_fn(d, k, |r, j| cols[j].0[r]);
    let lo: Vec<f64> = cols.iter().map(|col| col.1).collect();
    let hi: Vec<f64> = cols.iter().map(|col| col.2).collect();
    let mut t: Vec<f64> = (0..k).map(|j| 0.0f64.clamp(lo[j], hi[j])).collect();
    let mut free = vec![true; k];
    let residual = |t: &[f64]| c + &a * DVector::from_column_slice(t);
    for _ in 0..10 * k + 50 {
        let idx: Vec<usize> = (0..k).filter(|&j| free[j]).collect();
        let mut target = t.clone();
        if !idx.is_empty() {
            let mut fixed = t.clone();
            for &j in &idx {
                fixed[j] = 0.0;
            }
            let rhs = -residual(&fixed);
            let af = DMatrix::from_fn(d, idx.len(), |r, c2| a[(r, idx[c2])]);
            let Ok(sol) = af.svd(true, true).solve(&rhs, 1e-13) else { break };
            for (c2, &j) in idx.iter().enumerate() {
                target[j] = sol[c2];
            }
        }
        let inside = idx.iter().all(|&j| target[j] >= lo[j] && target[j] <= hi[j]);
        if inside {
            t = target;
            let res = residual(&t);
            let mut release: Option<(usize, f64)> = None;
            for j in (0..k).filter(|&j| !free[j]) {
                let g = a.column(j).dot(&res);
                let wants = (t[j] <= lo[j] && g < 0.0) || (t[j] >= hi[j] && g > 0.0);
                if wants && release.is_none_or(|(_, bg)| g.abs() > bg) {
                    release = Some((j, g.abs()));
                }
            }
            match release {
                Some((j, g)) if g > 1e-15 => free[j] = true,
                _ => break,
            }
        } else {
            let mut step = 1.0f64;
            for &j in &idx {
                let delta = target[j] - t[j];
                if target[j] < lo[j] {
                    step = step.min((lo[j] - t[j]) / delta);
                } else if target[j] > hi[j] {
                    step = step.min((hi[j] - t[j]) / delta);
                }
            }
            let step = step.max(0.0);
            for &j in &idx {
                t[j] = (t[j] + step * (target[j] - t[j])).clamp(lo[j], hi[j]);
                if t[j] <= lo[j] || t[j] >= hi[j] {
                    free[j] = false;
                }
            }
        }
    }
    residual(&t).norm()
}

/// Greedily picks rows in the given order whose restriction to `cols` is
/// linearly independent, stopping at |cols| rows.
fn independent_rows(x: &DMatrix<f64>, cols: &[usize], order: &[usize]) -> Vec<usize> {
    let k = cols.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut rows = Vec::with_capacity(k);
    let scale = x.amax().max(1.0);
    for &i in order {
        if rows.len() == k {
            break;
        }
        let mut v = DVector::from_fn(k, |c, _| x[(i, cols[c])]);
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-8 * scale {
            basis.push(v / norm);
            rows.push(i);
        }
    }
    rows
}

/// Least squares through a column-pivot-free QR factorization.
///
/// The optimality residual is the gradient norm ||X'(y − Xθ)||/n.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Fit> {
    check_data(x, y)?;
    let (n, d) = x.shape();
    if d > n {
        return Err(Error::SingularDesign(format!("{d} columns exceed {n} rows")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..d).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..d).any(|j| r[(j, j)].abs() <= 1e-12 * rmax.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularDesign("design is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    let theta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let resid = y - x * &theta;
    let grad = (x.transpose() * &resid).norm() / n as f64;
    Ok(Fit { objective: resid.norm_squared() / n as f64, theta, optimality_residual: grad, iterations: 1 })
}

/// Sieve basis family on [−6, 6].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SieveKind {
    /// (w/6)^{j−1}, j = 1..k.
    Polynomial,
    /// The first k of the eight cubic B-splines with interior knots
    /// −3.6, −1.2, 1.2, 3.6.
    PSpline,
}

/// Number of functions in the cubic B-spline family.
pub const PSPLINE_DIM: usize = 8;
const PSPLINE_DEGREE: usize = 3;
const PSPLINE_KNOTS: [f64; 12] = [-6.0, -6.0, -6.0, -6.0, -3.6, -1.2, 1.2, 3.6, 6.0, 6.0, 6.0, 6.0];

/// The first k functions of a sieve family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveBasis {
    pub kind: SieveKind,
    pub k: usize,
}

impl SieveBasis {
    pub fn new(kind: SieveKind, k: usize) -> Result<Self> {
        if k == 0 {
            return domain("a sieve needs at least one basis function");
        }
        if kind == SieveKind::PSpline && k > PSPLINE_DIM {
            return domain(format!("the B-spline family has only {PSPLINE_DIM} functions, asked for {k}"));
        }
        Ok(Self { kind, k })
    }

    /// Writes q_1(w), …, q_k(w) into `out`.
    pub fn eval_into(&self, w: f64, out: &mut [f64]) {
        match self.kind {
            SieveKind::Polynomial => {
                let z = w / 6.0;
                let mut p = 1.0;
                for o in out.iter_mut().take(self.k) {
                    *o = p;
                    p *= z;
                }
            }
            SieveKind::PSpline => {
                let all = cubic_bsplines(w);
                out[..self.k].copy_from_slice(&all[..self.k]);
            }
        }
    }

    /// (q_1(w), …, q_k(w)).
    pub fn eval(&self, w: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.eval_into(w, &mut out);
        out
    }

    /// The n×k design matrix.
    pub fn design(&self, w: &[f64]) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(w.len(), self.k);
        let mut buf = vec![0.0; self.k];
        for (i, &wi) in w.iter().enumerate() {
            self.eval_into(wi, &mut buf);
            for j in 0..self.k {
                q[(i, j)] = buf[j];
            }
        }
        q
    }

    /// Σ_j θ_j q_j(w).
    pub fn fitted(&self, theta: &DVector<f64>, w: f64) -> f64 {
        self.eval(w).iter().zip(theta.iter()).map(|(a, b)| a * b).sum()
    }
}

/// All eight cubic B-splines at w, by the Cox–de Boor recursion. Points
/// outside [−6, 6] are clamped to the boundary.
fn cubic_bsplines(w: f64) -> [f64; PSPLINE_DIM] {
    let t = &PSPLINE_KNOTS;
    let p = PSPLINE_DEGREE;
    let w = w.clamp(t[0], t[t.len() - 1]);
    let mut span = p;
    while span < PSPLINE_DIM - 1 && w >= t[span + 1] {
        span += 1;
    }
    let mut nb = [0.0; PSPLINE_DEGREE + 1];
    let mut left = [0.0; PSPLINE_DEGREE + 1];
    let mut right = [0.0; PSPLINE_DEGREE + 1];
    nb[0] = 1.0;
    for j in 1..=p {
        left[j] = w - t[span + 1 - j];
        right[j] = t[span + j] - w;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = nb[r] / (right[r + 1] + left[j - r]);
            nb[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        nb[j] = saved;
    }
    let mut out = [0.0; PSPLINE_DIM];
    for (r, v) in nb.iter().enumerate() {
        out[span - p + r] = *v;
    }
    out
}

/// Least squares of y on the first k sieve functions of w.
pub fn fit_sieve_ls(basis: SieveBasis, w: &[f64], y: &DVector<f64>) -> Result<Fit> {
    if w.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} points but {} responses", w.len(), y.len())));
    }
    if basis.k > w.len() {
        return Err(Error::SingularDesign(format!("k = {} exceeds n = {}", basis.k, w.len())));
    }
    fit_ols(&basis.design(w), y)
}

/// Law of the regression error in a population design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Gaussian,
    Laplace,
}

/// Population law Y = X'θ* + e with X ~ N(0, Σ_X) independent of a
/// centered error e of the given variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPopulation {
    pub sigma_x: DMatrix<f64>,
    pub error_var: f64,
    pub error_law: ErrorLaw,
}

impl LinearPopulation {
    /// The block Gaussian regression design with d covariates.
    pub fn block_gaussian(d: usize) -> Self {
        let v = stream_variance(NOISE_MIX);
        Self {
            sigma_x: DMatrix::identity(d, d) * v,
            error_var: ERROR_SCALE * ERROR_SCALE * v,
            error_law: ErrorLaw::Gaussian,
        }
    }

    fn mahalanobis_sq(&self, delta: &DVector<f64>) -> Result<f64> {
        if self.sigma_x.nrows() != delta.len() || self.sigma_x.ncols() != delta.len() {
            return Err(Error::ShapeMismatch(format!("Σ_X is {:?} but Δ has length {}", self.sigma_x.shape(), delta.len())));
        }
        Ok((delta.transpose() * &self.sigma_x * delta)[0].max(0.0))
    }
}

/// δ_P(θ̂, θ*) = √(Q(θ̂, P) − Q(θ*, P)) in closed form.
///
/// For the squared loss this is the Σ_X-norm of Δ = θ̂ − θ*. For the check
/// loss with Gaussian errors, Y − X'θ̂ ~ N(0, σ²) with σ² = Δ'Σ_XΔ + Var e,
/// and E ρ_τ(N(0, σ²)) = σ/√(2π) at every level τ.
pub fn delta_p(design: &LinearPopulation, loss: LossSpec, theta_hat: &DVector<f64>, theta_star: &DVector<f64>) -> Result<f64> {
    loss.validate()?;
    if theta_hat.len() != theta_star.len() {
        return Err(Error::ShapeMismatch("θ̂ and θ* differ in length".into()));
    }
    let q = design.mahalanobis_sq(&(theta_hat - theta_star))?;
    match loss {
        LossSpec::Squared => Ok(q.sqrt()),
        _ => {
            if design.error_law != ErrorLaw::Gaussian {
                return Err(Error::UnsupportedDesign("closed form needs Gaussian errors".into()));
            }
            let s_hat = (q + design.error_var).sqrt();
            let s_star = design.error_var.sqrt();
            Ok(((s_hat - s_star).max(0.0) / (2.0 * PI).sqrt()).sqrt())
        }
    }
}

/// Monte Carlo estimate and standard error of Q(θ̂, P) − Q(θ*, P) from
/// paired fresh draws.
pub fn criterion_gap_mc(
    design: &LinearPopulation,
    loss: LossSpec,
    theta_hat: &DVector<f64>,
    theta_star: &DVector<f64>,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    loss.validate()?;
    let d = theta_star.len();
    let delta = theta_hat - theta_star;
    design.mahalanobis_sq(&delta)?;
    if draws < 2 {
        return domain("need at least two draws");
    }
    let chol = design
        .sigma_x
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("Σ_X is not positive definite".into()))?;
    let lt_delta = chol.l().transpose() * &delta;
    let sd = design.error_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..draws {
        let mut shift = 0.0;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            shift += z * lt_delta[j];
        }
        let e = match design.error_law {
            ErrorLaw::Gaussian => sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
            ErrorLaw::Laplace => {
                let u: f64 = rand::Rng::random_range(&mut rng, -0.5..0.5);
                -sd / 2f64.sqrt() * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        };
        let gap = loss.value(e - shift) - loss.value(e);
        let dlt = gap - mean;
        mean += dlt / (i + 1) as f64;
        m2 += dlt * (gap - mean);
    }
    Ok((mean, (m2 / (draws - 1) as f64 / draws as f64).sqrt()))
}

/// δ_P through [`criterion_gap_mc`], for designs without a closed form.
pub fn delta_p_mc(design: &LinearPopulation, loss: LossSpec, theta_hat: &DVector<f64>, theta_star: &DVector<f64>, draws: usize, seed: u64) -> Result<f64> {
    Ok(criterion_gap_mc(design, loss, theta_hat, theta_star, draws, seed)?.0.max(0.0).sqrt())
}

/// √(λ·Pen(θ*)), the square-root bias bound of a penalized linear design.
pub fn sqrt_bias_bound(pen: PenaltySpec, theta_star: &DVector<f64>) -> Result<f64> {
    pen.validate()?;
    Ok((pen.lambda * pen.value(theta_star)).sqrt())
}

/// Default number of draws of [`MomentOracle::np_design`].
pub const ORACLE_DRAWS: usize = 1_000_000;

/// Fixed-seed Monte Carlo moments of a sieve family against a regression
/// function: M = E[q q'], b = E[q θ*(W)] and E θ*(W)².
#[derive(Debug, Clone)]
pub struct MomentOracle {
    pub kind: SieveKind,
    pub k_max: usize,
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    truth_sq: f64,
    w: Vec<f64>,
    truth: Vec<f64>,
}

impl MomentOracle {
    /// Moments under the nonparametric design law W = 6X/(1+|X|),
    /// X ~ N(0, 1 + 0.01²), with θ*(w) = 2 cos w + w.
    pub fn np_design(kind: SieveKind, k_max: usize, draws: usize, seed: u64) -> Result<Self> {
        let sd = stream_variance(NOISE_MIX).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..draws)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                np_transform(sd * z)
            })
            .collect();
        Self::from_points(kind, k_max, w, np_truth)
    }

    /// Moments from given points of W and a regression function.
    pub fn from_points(kind: SieveKind, k_max: usize, w: Vec<f64>, truth: impl Fn(f64) -> f64) -> Result<Self> {
        let basis = SieveBasis::new(kind, k_max)?;
        if w.len() < 2 {
            return domain("need at least two points");
        }
        let truth: Vec<f64> = w.iter().map(|&v| truth(v)).collect();
        let mut gram = DMatrix::zeros(k_max, k_max);
        let mut cross = DVector::zeros(k_max);
        let mut truth_sq = 0.0;
        let mut q = vec![0.0; k_max];
        for (&wi, &ti) in w.iter().zip(&truth) {
            basis.eval_into(wi, &mut q);
            for a in 0..k_max {
                cross[a] += q[a] * ti;
                for b in a..k_max {
                    gram[(a, b)] += q[a] * q[b];
                }
            }
            truth_sq += ti * ti;
        }
        let nf = w.len() as f64;
        for a in 0..k_max {
            for b in a..k_max {
                gram[(a, b)] /= nf;
                gram[(b, a)] = gram[(a, b)];
            }
        }
        cross /= nf;
        Ok(Self { kind, k_max, gram, cross, truth_sq: truth_sq / nf, w, truth })
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k_max {
            return domain(format!("k = {k} outside 1..={}", self.k_max));
        }
        Ok(())
    }

    /// M_k = E[q^k q^k'].
    pub fn gram(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_k(k)?;
        Ok(self.gram.view((0, 0), (k, k)).into_owned())
    }

    /// ν_k = M_k^{−1} E[q^k θ*(W)].
    pub fn projection(&self, k: usize) -> Result<DVector<f64>> {
        let m = self.gram(k)?;
        let b = self.cross.rows(0, k).into_owned();
        m.cholesky()
            .map(|c| c.solve(&b))
            .ok_or_else(|| Error::SingularDesign(format!("moment matrix of order {k} is singular")))
    }

    fn pad(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() > self.k_max {
            return Err(Error::ShapeMismatch(format!("{} coefficients exceed k_max = {}", theta.len(), self.k_max)));
        }
        let mut out = DVector::zeros(self.k_max);
        out.rows_mut(0, theta.len()).copy_from(theta);
        Ok(out)
    }

    /// ||Σ_j (a_j − b_j) q_j||_{L²(P)} with the shorter vector zero-padded.
    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        let delta = self.pad(a)? - self.pad(b)?;
        Ok((delta.transpose() * &self.gram * &delta)[0].max(0.0).sqrt())
    }

    /// ||Σ_j θ_j q_j − θ*||_{L²(P)}.
    pub fn l2_error(&self, theta: &DVector<f64>) -> Result<f64> {
        let t = self.pad(theta)?;
        let v = (t.transpose() * &self.gram * &t)[0] - 2.0 * t.dot(&self.cross) + self.truth_sq;
        Ok(v.max(0.0).sqrt())
    }

    /// Bias ||Σ_j ν_k(j) q_j − θ*||_{L²(P)} of the best k-term approximation.
    ///
    /// Fails with [`Error::OracleVariance`] when the Monte Carlo standard
    /// error exceeds 1% of a nonzero value.
    pub fn bias(&self, k: usize) -> Result<f64> {
        let nu = self.projection(k)?;
        let basis = SieveBasis::new(self.kind, k)?;
        let mut q = vec![0.0; k];
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, (&wi, &ti)) in self.w.iter().zip(&self.truth).enumerate() {
            basis.eval_into(wi, &mut q);
            let e = q.iter().zip(nu.iter()).map(|(a, b)| a * b).sum::<f64>() - ti;
            let v = e * e;
            let dl = v - mean;
            mean += dl / (i + 1) as f64;
            m2 += dl * (v - mean);
        }
        let nf = self.w.len() as f64;
        let se_sq = (m2 / (nf - 1.0) / nf).sqrt();
        let value = mean.max(0.0).sqrt();
        if value > 1e-12 && se_sq / (2.0 * value) > 0.01 * value {
            return Err(Error::OracleVariance(format!("bias at k = {k} is {value:.3e} with standard error {:.3e}", se_sq / (2.0 * value))));
        }
        Ok(value)
    }

    /// Biases at the given orders, made non-increasing by a running minimum.
    /// The flag reports whether the raw sequence increased anywhere.
    pub fn bias_sequence(&self, ks: &[usize]) -> Result<(Vec<f64>, bool)> {
        let raw = ks.iter().map(|&k| self.bias(k)).collect::<Result<Vec<f64>>>()?;
        let mut flagged = false;
        let mut out = Vec::with_capacity(raw.len());
        let mut cur = f64::INFINITY;
        for v in raw {
            if v > cur {
                flagged = true;
            }
            cur = cur.min(v);
            out.push(cur);
        }
        Ok((out, flagged))
    }
}
