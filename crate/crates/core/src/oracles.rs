//! Monteiro–Svaiter (MS) oracles.
//!
//! An MS oracle maps a query `(y, λ′)` to a pair `(x, λ)` such that
//!
//! ```text
//! ‖x − (y − ∇f(x)/λ)‖ ≤ σ‖x − y‖,
//! ```
//!
//! i.e. `x` approximately minimizes `f(·) + (λ/2)‖· − y‖²`. This module
//! provides the condition checker, the gradient-step and cubic-regularized
//! Newton oracles, and the two adaptive regularized-Newton oracles: the exact
//! one built on linear solves ([`amsn`]) and the matrix-free one built on
//! Conjugate Residuals ([`amsn_fo`]).

use std::ops::{Add, AddAssign};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{conj_res, default_conj_res_cap, norm, reg_newton_step};
use crate::objectives::Objective;

/// Regularization floor below which a regularized step is treated as a pure
/// Newton step.
pub const LAMBDA_NEWTON: f64 = 1e-10;

/// Largest regularization the adaptive searches will try before declaring
/// non-convergence.
pub const LAMBDA_CEILING: f64 = 1e30;

/// Relative tolerance on the cubic-step fixed point `λ = (M/2)‖x − y‖`.
pub const CR_RATIO_TOL: f64 = 1e-5;

pub const DEFAULT_SIGMA: f64 = 0.5;

/// Additive slack used when certifying the MS inequality after the fact.
pub const MS_AUDIT_SLACK: f64 = 1e-9;

/// Relative step length below which a regularized step is indistinguishable
/// from the query point. When the adaptive searches fail the MS check with
/// such a step, `∇f(y)` is at rounding level and the oracle reports the
/// query as stationary instead of raising `λ` further.
pub const STEP_RESOLUTION: f64 = 4.0 * f64::EPSILON;

/// Work performed by one or more oracle calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub hessian_evals: u64,
    pub linear_solves: u64,
    pub hvps: u64,
    pub gradient_evals: u64,
}

impl Add for Counters {
    type Output = Counters;

    fn add(self, o: Counters) -> Counters {
        Counters {
            hessian_evals: self.hessian_evals + o.hessian_evals,
            linear_solves: self.linear_solves + o.linear_solves,
            hvps: self.hvps + o.hvps,
            gradient_evals: self.gradient_evals + o.gradient_evals,
        }
    }
}

impl AddAssign for Counters {
    fn add_assign(&mut self, o: Counters) {
        *self = *self + o;
    }
}

/// Output of an MS oracle call.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub x: Array1<f64>,
    pub lambda: f64,
    /// `‖x − (y − ∇f(x)/λ)‖`.
    pub ms_residual: f64,
    /// `‖x − y‖`.
    pub step_norm: f64,
    pub counters: Counters,
    /// `∇f(x)`, reused by the outer loops for the dual-sequence update.
    pub grad_x: Array1<f64>,
    /// Whether evaluating `grad_x` is already included in `counters`.
    pub grad_x_charged: bool,
    /// The search stopped at the [`LAMBDA_NEWTON`] floor.
    pub floor_hit: bool,
    /// `∇f(y) = 0`, or numerically so (see [`STEP_RESOLUTION`]); the oracle returned `x = y`.
    pub stationary: bool,
}

impl OracleResult {
    /// The MS inequality with the audit slack `1e-9·(1 + ‖x − y‖)`.
    pub fn satisfies_ms(&self, sigma: f64) -> bool {
        self.ms_residual <= sigma * self.step_norm + MS_AUDIT_SLACK * (1.0 + self.step_norm)
    }
}

/// `‖x − (y − g_x/λ)‖` where `g_x = ∇f(x)`.
pub fn ms_residual(x: &Array1<f64>, y: &Array1<f64>, grad_x: &Array1<f64>, lambda: f64) -> f64 {
    let inv = 1.0 / lambda;
    x.iter()
        .zip(y.iter())
        .zip(grad_x.iter())
        .map(|((xi, yi), gi)| {
            let r = xi - yi + inv * gi;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Order `s` of a movement bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MovementOrder {
    Finite(f64),
    Infinite,
}

/// Whether `(x, y, λ)` satisfy an `(s, c)`-movement bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovementCertificate {
    pub order: MovementOrder,
    pub c: f64,
    pub holds: bool,
}

/// Evaluates the `(s, c)`-movement bound for a step of length `step_norm`
/// with regularization `lambda`:
/// `‖x − y‖ ≥ (λ/cˢ)^{1/(s−1)}` for `1 < s < ∞`, `‖x − y‖ ≥ 1/c` for
/// `s = ∞`, and `λ ≤ c` for `s = 1`.
pub fn movement_bound(
    step_norm: f64,
    lambda: f64,
    order: MovementOrder,
    c: f64,
) -> MovementCertificate {
    let holds = match order {
        MovementOrder::Infinite => step_norm >= 1.0 / c,
        MovementOrder::Finite(s) if s == 1.0 => lambda <= c,
        MovementOrder::Finite(s) => step_norm >= (lambda / c.powf(s)).powf(1.0 / (s - 1.0)),
    };
    MovementCertificate { order, c, holds }
}

/// Outcome of testing one regularization value.
#[derive(Debug, Clone)]
pub struct MsCheck {
    pub pass: bool,
    pub x: Array1<f64>,
    pub residual: f64,
    pub step_norm: f64,
    pub grad_x: Array1<f64>,
}

fn finite_or_err(v: &Array1<f64>, what: &str) -> Result<()> {
    if v.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite {what}")))
    }
}

/// Gradient and Hessian at a query point, shared by every regularized step
/// tried there.
struct NewtonModel<'a> {
    obj: &'a dyn Objective,
    y: &'a Array1<f64>,
    grad: Array1<f64>,
    hess: Array2<f64>,
}

impl<'a> NewtonModel<'a> {
    fn build(obj: &'a dyn Objective, y: &'a Array1<f64>) -> Result<Self> {
        let grad = obj.gradient(y)?;
        finite_or_err(&grad, "gradient")?;
        let hess = obj.hessian(y)?;
        Ok(Self { obj, y, grad, hess })
    }

    fn stationary(&self) -> bool {
        self.grad.iter().all(|&g| g == 0.0)
    }

    fn step(&self, lambda: f64) -> Result<Array1<f64>> {
        let w = reg_newton_step(&self.hess, &self.grad, lambda)?;
        Ok(self.y + &w)
    }

    fn check(&self, lambda: f64, sigma: f64) -> Result<MsCheck> {
        let x = self.step(lambda)?;
        certify(self.obj, self.y, x, lambda, sigma)
    }
}

fn certify(
    obj: &dyn Objective,
    y: &Array1<f64>,
    x: Array1<f64>,
    lambda: f64,
    sigma: f64,
) -> Result<MsCheck> {
    let grad_x = obj.gradient(&x)?;
    finite_or_err(&grad_x, "gradient")?;
    let step_norm = crate::linalg::distance(&x, y);
    let residual = ms_residual(&x, y, &grad_x, lambda);
    Ok(MsCheck {
        pass: residual <= sigma * step_norm,
        x,
        residual,
        step_norm,
        grad_x,
    })
}

/// Tests whether the exact regularized Newton step
/// `x = y − (∇²f(y) + λI)⁻¹∇f(y)` satisfies the MS condition with factor `sigma`.
///
/// A stationary query (`∇f(y) = 0`) gives `x = y`, which passes with zero residual.
pub fn check_ms(obj: &dyn Objective, y: &Array1<f64>, lambda: f64, sigma: f64) -> Result<MsCheck> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let model = NewtonModel::build(obj, y)?;
    if model.stationary() {
        return Ok(MsCheck {
            pass: true,
            x: y.clone(),
            residual: 0.0,
            step_norm: 0.0,
            grad_x: model.grad,
        });
    }
    model.check(lambda, sigma)
}

fn stationary_result(
    y: &Array1<f64>,
    grad: Array1<f64>,
    lambda: f64,
    counters: Counters,
) -> OracleResult {
    OracleResult {
        x: y.clone(),
        lambda,
        ms_residual: 0.0,
        step_norm: 0.0,
        counters,
        grad_x: grad,
        grad_x_charged: true,
        floor_hit: false,
        stationary: true,
    }
}

fn unresolved(check: &MsCheck, y: &Array1<f64>) -> bool {
    !check.pass && check.step_norm <= STEP_RESOLUTION * (1.0 + norm(y))
}

/// `x = y` for a query whose gradient is at rounding level.
fn numerically_stationary(
    y: &Array1<f64>,
    grad: &Array1<f64>,
    lambda: f64,
    counters: Counters,
) -> OracleResult {
    log::debug!(
        "query is numerically stationary (gradient norm {:e})",
        norm(grad)
    );
    OracleResult {
        x: y.clone(),
        lambda,
        ms_residual: norm(grad) / lambda,
        step_norm: 0.0,
        counters,
        grad_x: grad.clone(),
        grad_x_charged: true,
        floor_hit: false,
        stationary: true,
    }
}

fn from_check(check: MsCheck, lambda: f64, counters: Counters, floor_hit: bool) -> OracleResult {
    OracleResult {
        x: check.x,
        lambda,
        ms_residual: check.residual,
        step_norm: check.step_norm,
        counters,
        grad_x: check.grad_x,
        grad_x_charged: true,
        floor_hit,
        stationary: false,
    }
}

/// Gradient step `x = y − η∇f(y)` reported with `λ = 1/η`.
pub fn gd_oracle(obj: &dyn Objective, y: &Array1<f64>, eta: f64) -> Result<OracleResult> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step size must be positive, got {eta}"
        )));
    }
    let g = obj.gradient(y)?;
    finite_or_err(&g, "gradient")?;
    let mut x = y.clone();
    x.scaled_add(-eta, &g);
    let lambda = 1.0 / eta;
    let check = certify(obj, y, x, lambda, 0.0)?;
    Ok(OracleResult {
        x: check.x,
        lambda,
        ms_residual: check.residual,
        step_norm: check.step_norm,
        counters: Counters {
            gradient_evals: 1,
            ..Counters::default()
        },
        grad_x: check.grad_x,
        grad_x_charged: false,
        floor_hit: false,
        stationary: g.iter().all(|&v| v == 0.0),
    })
}

/// Cubic-regularized Newton step with parameter `m`.
///
/// Solves `λ = (M/2)‖(∇²f(y) + λI)⁻¹∇f(y)‖` by log-scale bisection until the
/// ratio of the two sides is within [`CR_RATIO_TOL`] of one, or returns
/// `λ = LAMBDA_NEWTON` with `floor_hit` when the root lies below the floor.
/// The bracket starts at `[LAMBDA_NEWTON, M·‖w(LAMBDA_NEWTON)‖]` and is
/// doubled until the ratio changes sign.
pub fn cr_oracle(obj: &dyn Objective, y: &Array1<f64>, m: f64) -> Result<OracleResult> {
    if !(m > 0.0) {
        return Err(Error::InvalidInput(format!("M must be positive, got {m}")));
    }
    let model = NewtonModel::build(obj, y)?;
    let mut counters = Counters {
        hessian_evals: 1,
        gradient_evals: 1,
        ..Counters::default()
    };
    if model.stationary() {
        return Ok(stationary_result(y, model.grad, LAMBDA_NEWTON, counters));
    }

    let half_m = 0.5 * m;
    let eval = |lambda: f64, counters: &mut Counters| -> Result<(f64, Array1<f64>)> {
        let w = reg_newton_step(&model.hess, &model.grad, lambda)?;
        counters.linear_solves += 1;
        let ratio = lambda / (half_m * norm(&w));
        Ok((ratio, w))
    };
    let within = |ratio: f64| (1.0 - CR_RATIO_TOL..=1.0 + CR_RATIO_TOL).contains(&ratio);

    let finish = |lambda: f64,
                  w: Array1<f64>,
                  counters: Counters,
                  floor_hit: bool|
     -> Result<OracleResult> {
        let x = y + &w;
        let check = certify(obj, y, x, lambda, 0.0)?;
        Ok(OracleResult {
            x: check.x,
            lambda,
            ms_residual: check.residual,
            step_norm: check.step_norm,
            counters,
            grad_x: check.grad_x,
            grad_x_charged: false,
            floor_hit,
            stationary: false,
        })
    };

    let (floor_ratio, floor_w) = eval(LAMBDA_NEWTON, &mut counters)?;
    if within(floor_ratio) {
        return finish(LAMBDA_NEWTON, floor_w, counters, false);
    }
    if floor_ratio > 1.0 {
        return finish(LAMBDA_NEWTON, floor_w, counters, true);
    }

    let mut lo = LAMBDA_NEWTON;
    let mut hi = 2.0 * half_m * norm(&floor_w);
    let (mut hi_ratio, mut hi_w) = eval(hi, &mut counters)?;
    while hi_ratio < 1.0 - CR_RATIO_TOL {
        lo = hi;
        hi *= 2.0;
        if hi > LAMBDA_CEILING {
            return Err(Error::NonConvergence { lambda: hi });
        }
        (hi_ratio, hi_w) = eval(hi, &mut counters)?;
    }
    if within(hi_ratio) {
        return finish(hi, hi_w, counters, false);
    }

    for _ in 0..500 {
        let mid = (lo * hi).sqrt();
        let (ratio, w) = eval(mid, &mut counters)?;
        if within(ratio) {
            return finish(mid, w, counters, false);
        }
        if ratio < 1.0 {
            lo = mid;
        } else {
            hi = mid;
            hi_w = w;
        }
        if hi <= lo * (1.0 + f64::EPSILON) {
            break;
        }
    }
    log::warn!("cubic step bisection stalled at lambda {hi:e}; returning upper bracket");
    finish(hi, hi_w, counters, false)
}

/// When the adaptive Newton oracle may return the query value immediately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LazyPolicy {
    Always,
    Never,
    /// Eager on the first call of a run, lazy afterwards.
    AfterFirst,
}

impl LazyPolicy {
    pub fn is_lazy(self, call_index: usize) -> bool {
        match self {
            LazyPolicy::Always => true,
            LazyPolicy::Never => false,
            LazyPolicy::AfterFirst => call_index > 0,
        }
    }
}

/// Upper bound `2 + 2·log₂(1 + |log₂(λ/λ′)|)` on the linear solves of one
/// [`amsn`] call.
pub fn amsn_solve_bound(lambda: f64, lambda_prime: f64) -> f64 {
    2.0 + 2.0 * (1.0 + (lambda / lambda_prime).log2().abs()).log2()
}

/// `λ′·2^e`; exact scaling by a power of two.
fn scaled(lambda_prime: f64, exponent: i64) -> f64 {
    let e = exponent.clamp(-4000, 4000) as i32;
    if e.abs() > 1000 {
        // split to avoid intermediate overflow of 2^e
        lambda_prime * 2f64.powi(e / 2) * 2f64.powi(e - e / 2)
    } else {
        lambda_prime * 2f64.powi(e)
    }
}

/// Adaptive regularized Newton oracle.
///
/// Searches, over the grid `λ′·2^k`, for a `λ` whose regularized Newton step
/// passes the MS check while the step for `λ/2` fails: a double-exponential
/// sweep away from `λ′` (by factors `2^{2^k}`) followed by exactly `k★`
/// geometric-mean bisection steps. With `lazy`, a passing `λ′` is returned
/// after a single solve. The downward sweep stops at [`LAMBDA_NEWTON`] and
/// then returns the smallest passing value tried, with `floor_hit` set.
///
/// Every call not hitting the floor uses at most
/// [`amsn_solve_bound`]`(λ, λ′)` linear solves.
pub fn amsn(
    obj: &dyn Objective,
    y: &Array1<f64>,
    lambda_prime: f64,
    sigma: f64,
    lazy: bool,
) -> Result<OracleResult> {
    if !(lambda_prime > 0.0) || !lambda_prime.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lambda' must be positive, got {lambda_prime}"
        )));
    }
    let model = NewtonModel::build(obj, y)?;
    let mut counters = Counters {
        hessian_evals: 1,
        gradient_evals: 1,
        ..Counters::default()
    };
    if model.stationary() {
        return Ok(stationary_result(y, model.grad, lambda_prime, counters));
    }
    let check = |exponent: i64, counters: &mut Counters| -> Result<(f64, MsCheck)> {
        let lambda = scaled(lambda_prime, exponent);
        let c = model.check(lambda, sigma)?;
        counters.linear_solves += 1;
        counters.gradient_evals += 1;
        Ok((lambda, c))
    };

    // Exponents of the valid / invalid ends, relative to λ′.
    let (mut vld, mut invld): (i64, i64);
    let (first_lambda, first) = check(0, &mut counters)?;
    let mut vld_step: (f64, MsCheck);
    if first.pass {
        if lazy {
            return Ok(from_check(first, first_lambda, counters, false));
        }
        vld = 0;
        vld_step = (first_lambda, first);
        let mut k = 0u32;
        loop {
            let cand = vld - (1i64 << k);
            if scaled(lambda_prime, cand) < LAMBDA_NEWTON {
                let (lambda, step) = vld_step;
                return Ok(from_check(step, lambda, counters, true));
            }
            let (lambda, c) = check(cand, &mut counters)?;
            if c.pass {
                vld = cand;
                vld_step = (lambda, c);
                k += 1;
            } else {
                invld = cand;
                break;
            }
        }
    } else {
        invld = 0;
        let mut k = 0u32;
        loop {
            let cand = invld + (1i64 << k);
            let lambda = scaled(lambda_prime, cand);
            if !(lambda <= LAMBDA_CEILING) {
                return Err(Error::NonConvergence { lambda });
            }
            let (lambda, c) = check(cand, &mut counters)?;
            if c.pass {
                vld = cand;
                vld_step = (lambda, c);
                break;
            }
            if unresolved(&c, y) {
                return Ok(numerically_stationary(y, &model.grad, lambda, counters));
            }
            invld = cand;
            k += 1;
        }
    }

    while vld - invld > 1 {
        let mid = (vld + invld) / 2;
        let (lambda, c) = check(mid, &mut counters)?;
        if c.pass {
            vld = mid;
            vld_step = (lambda, c);
        } else {
            invld = mid;
        }
    }
    let (lambda, step) = vld_step;
    Ok(from_check(step, lambda, counters, false))
}

/// Matrix-free adaptive Newton oracle (lazy variant).
///
/// For `λ = λ′, 2λ′, 4λ′, …` approximately solves
/// `(∇²f(y) + λI) w = −∇f(y)` with [`conj_res`] at threshold `λσ`, using only
/// Hessian-vector products, and returns the first `x = y + w` passing the MS
/// check. `cap` bounds each Conjugate Residuals run (default `10·d + 100`).
pub fn amsn_fo(
    obj: &dyn Objective,
    y: &Array1<f64>,
    lambda_prime: f64,
    sigma: f64,
    cap: Option<usize>,
) -> Result<OracleResult> {
    if !(lambda_prime > 0.0) || !lambda_prime.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lambda' must be positive, got {lambda_prime}"
        )));
    }
    let g = obj.gradient(y)?;
    finite_or_err(&g, "gradient")?;
    let mut counters = Counters {
        gradient_evals: 1,
        ..Counters::default()
    };
    if g.iter().all(|&v| v == 0.0) {
        return Ok(stationary_result(y, g, lambda_prime, counters));
    }
    let cap = cap.unwrap_or_else(|| default_conj_res_cap(obj.dim()));
    let hvp = obj.hvp_operator(y)?;
    let b = g.mapv(|v| -v);
    let mut lambda = lambda_prime;
    loop {
        if !(lambda <= LAMBDA_CEILING) {
            return Err(Error::NonConvergence { lambda });
        }
        let shifted = |v: &Array1<f64>| {
            let mut out = hvp(v);
            out.scaled_add(lambda, v);
            out
        };
        let out = conj_res(shifted, &b, lambda * sigma, cap)?;
        counters.hvps += out.matvecs as u64;
        let x = y + &out.w;
        let c = certify(obj, y, x, lambda, sigma)?;
        counters.gradient_evals += 1;
        if c.pass {
            return Ok(from_check(c, lambda, counters, false));
        }
        if unresolved(&c, y) {
            return Ok(numerically_stationary(y, &g, lambda, counters));
        }
        lambda *= 2.0;
    }
}

/// An MS oracle usable by the acceleration loops.
pub trait MsOracle {
    /// Answers the query `(y, λ′)`; `call_index` counts previous calls in the run.
    fn query(
        &self,
        obj: &dyn Objective,
        y: &Array1<f64>,
        lambda_prime: f64,
        call_index: usize,
    ) -> Result<OracleResult>;

    fn name(&self) -> &'static str;

    /// Whether [`amsn_solve_bound`] applies to each call.
    fn counts_linear_solves_adaptively(&self) -> bool {
        false
    }
}

/// Gradient-step oracle with fixed step size; ignores `λ′`.
#[derive(Debug, Clone, Copy)]
pub struct GdOracle {
    pub eta: f64,
}

impl MsOracle for GdOracle {
    fn query(
        &self,
        obj: &dyn Objective,
        y: &Array1<f64>,
        _lambda_prime: f64,
        _call_index: usize,
    ) -> Result<OracleResult> {
        gd_oracle(obj, y, self.eta)
    }

    fn name(&self) -> &'static str {
        "GD"
    }
}

/// Cubic-regularized Newton oracle with fixed `M`; ignores `λ′`.
#[derive(Debug, Clone, Copy)]
pub struct CrOracle {
    pub m: f64,
}

impl MsOracle for CrOracle {
    fn query(
        &self,
        obj: &dyn Objective,
        y: &Array1<f64>,
        _lambda_prime: f64,
        _call_index: usize,
    ) -> Result<OracleResult> {
        cr_oracle(obj, y, self.m)
    }

    fn name(&self) -> &'static str {
        "CR"
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AmsnOracle {
    pub sigma: f64,
    pub lazy: LazyPolicy,
}

impl MsOracle for AmsnOracle {
    fn query(
        &self,
        obj: &dyn Objective,
        y: &Array1<f64>,
        lambda_prime: f64,
        call_index: usize,
    ) -> Result<OracleResult> {
        amsn(
            obj,
            y,
            lambda_prime,
            self.sigma,
            self.lazy.is_lazy(call_index),
        )
    }

    fn name(&self) -> &'static str {
        "AMSN"
    }

    fn counts_linear_solves_adaptively(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AmsnFoOracle {
    pub sigma: f64,
    pub cap: Option<usize>,
}

impl MsOracle for AmsnFoOracle {
    fn query(
        &self,
        obj: &dyn Objective,
        y: &Array1<f64>,
        lambda_prime: f64,
        _call_index: usize,
    ) -> Result<OracleResult> {
        amsn_fo(obj, y, lambda_prime, self.sigma, self.cap)
    }

    fn name(&self) -> &'static str {
        "AMSN_FO"
    }
}
