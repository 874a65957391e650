//! Outer acceleration loops.
//!
//! [`optimal_ms_run`] is the bisection-free scheme: it guesses the next
//! regularization `λ′`, accepts whatever `λ` the oracle returns, and damps
//! the momentum when the guess was too optimistic (`λ > λ′`).
//! [`ms_bisection_run`] is the classical Monteiro–Svaiter scheme, which
//! searches over `λ′` until the oracle's `λ` lands in `[λ′/ρ, λ′]`.
//!
//! Both record one [`TraceRecord`] per outer iteration, with the potential
//! terms `E_t = f(x_t) − f(x★)`, `D_t = ½‖v_t − x★‖²` and
//! `N_t = ½‖x̃_t − y_{t−1}‖²` whenever a reference optimum is supplied.
//! [`audit_potential`] re-checks the potential decrease and growth bounds on
//! such a trace.

use std::fmt;
use std::time::Instant;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg::distance;
use crate::objectives::Objective;
use crate::oracles::{amsn_solve_bound, Counters, MsOracle, OracleResult};

pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_LAMBDA0: f64 = 0.1;
pub const DEFAULT_RHO: f64 = 4.0;

/// Range of `λ′` the bracketing search may explore.
pub const BRACKET_RANGE: (f64, f64) = (1e-30, 1e30);

/// Relative tolerance of the potential and growth audits.
pub const AUDIT_REL_TOL: f64 = 1e-8;

/// Positive root of `λ′a² − a − A = 0`.
pub fn a_prime(lambda_prime: f64, a: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * lambda_prime * a).sqrt()) / (2.0 * lambda_prime)
}

/// How the iterate is formed on an up step (`λ > λ′`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Damping {
    /// `x_{t+1} = ((1−γ)A_t x_t + γA′_{t+1} x̃_{t+1}) / A_{t+1}` with `a_{t+1} = γa′_{t+1}`.
    #[default]
    ConvexCombination,
    /// `x_{t+1}` is whichever of `x̃_{t+1}, x_t` has the lower objective; `a_{t+1} = γa′_{t+1}`.
    Argmin,
    /// No damping: `x_{t+1} = x̃_{t+1}` and `a_{t+1} = a′_{t+1}` on every step.
    Off,
}

/// Stopping rule shared by all runs. The run ends at whichever limit is hit first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_oracle_calls: usize,
    pub target_gap: Option<f64>,
    pub max_seconds: Option<f64>,
}

impl Budget {
    pub fn calls(max_oracle_calls: usize) -> Self {
        Self {
            max_oracle_calls,
            target_gap: None,
            max_seconds: None,
        }
    }
}

/// A high-accuracy minimizer used for suboptimality and potential terms.
#[derive(Debug, Clone)]
pub struct Reference {
    pub x: Array1<f64>,
}

/// One row of a run trace. Row `t = 0` is the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub f: f64,
    /// `f(x_t) − f(x★)`, when a reference is known.
    pub gap: Option<f64>,
    /// `A_t`; `None` for methods without an accumulated step size.
    pub a: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_prime: Option<f64>,
    pub up: Option<bool>,
    pub e: Option<f64>,
    pub d: Option<f64>,
    pub n: Option<f64>,
    /// Cumulative over the run.
    pub counters: Counters,
    pub wall_ms: f64,
}

/// One oracle call.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    /// Outer iteration that issued the call (the row it contributes to is `t + 1`).
    pub t: usize,
    pub lambda_query: f64,
    pub lambda: f64,
    pub counters: Counters,
    pub floor_hit: bool,
    pub ms_residual: f64,
    pub step_norm: f64,
}

impl CallRecord {
    fn new(t: usize, lambda_query: f64, r: &OracleResult) -> Self {
        Self {
            t,
            lambda_query,
            lambda: r.lambda,
            counters: r.counters,
            floor_hit: r.floor_hit,
            ms_residual: r.ms_residual,
            step_norm: r.step_norm,
        }
    }

    /// Linear solves within `⌈2 + 2·log₂(1 + |log₂(λ/λ′)|)⌉`. Floor-hitting
    /// calls are exempt and report `true`.
    pub fn within_solve_bound(&self) -> bool {
        self.floor_hit
            || self.counters.linear_solves as f64
                <= amsn_solve_bound(self.lambda, self.lambda_query).ceil()
    }
}

/// Everything a run produced.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub calls: Vec<CallRecord>,
    pub final_x: Array1<f64>,
    /// Smallest gap seen so far, per row.
    pub best_gap: Option<f64>,
    pub counters: Counters,
}

impl RunTrace {
    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.gap)
    }
}

/// A failed run together with the trace accumulated before the failure.
#[derive(Debug, Clone)]
pub struct RunError {
    pub error: Error,
    pub trace: RunTrace,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} trace rows)",
            self.error,
            self.trace.records.len()
        )
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type RunResult = std::result::Result<RunTrace, RunError>;

/// Trace bookkeeping shared by every run loop.
pub(crate) struct Recorder<'a> {
    obj: &'a dyn Objective,
    reference: Option<&'a Reference>,
    start: Instant,
    budget: Budget,
    pub(crate) trace: RunTrace,
}

/// Optional per-row quantities supplied by the accelerated loops.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RowExtras {
    pub a: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_prime: Option<f64>,
    pub up: Option<bool>,
    pub n: Option<f64>,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(
        obj: &'a dyn Objective,
        reference: Option<&'a Reference>,
        budget: Budget,
    ) -> Self {
        Self {
            obj,
            reference,
            start: Instant::now(),
            budget,
            trace: RunTrace::default(),
        }
    }

    pub(crate) fn fail(mut self, error: Error, x: &Array1<f64>) -> RunError {
        self.trace.final_x = x.clone();
        RunError {
            error,
            trace: self.trace,
        }
    }

    pub(crate) fn charge(&mut self, c: Counters) {
        self.trace.counters += c;
    }

    pub(crate) fn call(&mut self, call: CallRecord) {
        self.trace.calls.push(call);
    }

    pub(crate) fn calls_made(&self) -> usize {
        self.trace.calls.len()
    }

    /// Appends row `t` for iterate `x` (and dual point `v` for `D_t`).
    pub(crate) fn row(
        &mut self,
        t: usize,
        x: &Array1<f64>,
        v: Option<&Array1<f64>>,
        extras: RowExtras,
    ) -> Result<()> {
        let f = self.obj.value(x)?;
        if !f.is_finite() || x.iter().any(|xi| !xi.is_finite()) {
            return Err(Error::Divergence {
                step: t,
                reason: format!("non-finite iterate or objective value {f}"),
            });
        }
        let gap = match self.reference {
            Some(r) => Some(self.obj.value_gap(x, &r.x)?),
            None => None,
        };
        let d = match (self.reference, v) {
            (Some(r), Some(v)) => Some(0.5 * distance(v, &r.x).powi(2)),
            _ => None,
        };
        let e = if extras.a.is_some() { gap } else { None };
        if let Some(g) = gap {
            self.trace.best_gap = Some(self.trace.best_gap.map_or(g, |b: f64| b.min(g)));
        }
        self.trace.records.push(TraceRecord {
            t,
            f,
            gap,
            a: extras.a,
            lambda: extras.lambda,
            lambda_prime: extras.lambda_prime,
            up: extras.up,
            e,
            d,
            n: extras.n,
            counters: self.trace.counters,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    /// Whether the budget or the target gap ends the run.
    pub(crate) fn done(&self) -> bool {
        if self.calls_made() >= self.budget.max_oracle_calls {
            return true;
        }
        if let (Some(target), Some(last)) = (self.budget.target_gap, self.trace.records.last()) {
            if last.gap.is_some_and(|g| g <= target) {
                return true;
            }
        }
        if let Some(limit) = self.budget.max_seconds {
            if self.start.elapsed().as_secs_f64() >= limit {
                return true;
            }
        }
        false
    }

    pub(crate) fn finish(mut self, x: Array1<f64>) -> RunTrace {
        self.trace.final_x = x;
        self.trace
    }
}

/// Settings of [`optimal_ms_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptMsConfig {
    /// Multiplicative update of `λ′` (`α > 1`).
    pub alpha: f64,
    /// Initial guess `λ′₀`.
    pub lambda0: f64,
    pub damping: Damping,
}

impl Default for OptMsConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            lambda0: DEFAULT_LAMBDA0,
            damping: Damping::ConvexCombination,
        }
    }
}

/// Mutable state of the bisection-free loop between oracle calls.
#[derive(Debug, Clone)]
pub struct AccelState {
    pub t: usize,
    /// `A_t`.
    pub a: f64,
    pub x: Array1<f64>,
    pub v: Array1<f64>,
    /// Guess `λ′_{t+1}` for the next call.
    pub lambda_next_guess: f64,
    pub last: Option<StepInfo>,
}

/// Bookkeeping of the latest step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// `a_t`.
    pub a_step: f64,
    /// `a′_t`.
    pub a_prime: f64,
    /// `γ_t`; 1 on down steps.
    pub gamma: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub up: bool,
    /// `N_t = ½‖x̃_t − y_{t−1}‖²`.
    pub n: f64,
}

impl AccelState {
    pub fn new(x0: &Array1<f64>, lambda0: f64) -> Self {
        Self {
            t: 0,
            a: 0.0,
            x: x0.clone(),
            v: x0.clone(),
            lambda_next_guess: lambda0,
            last: None,
        }
    }

    /// `y_t = (A_t x_t + a′ v_t) / (A_t + a′)`.
    fn query_point(&self, a_prime: f64) -> Array1<f64> {
        if self.a == 0.0 {
            return self.v.clone();
        }
        let big = self.a + a_prime;
        let mut y = &self.x * (self.a / big);
        y.scaled_add(a_prime / big, &self.v);
        y
    }
}

/// One step of the bisection-free loop. Returns the oracle result so the
/// caller can log it; its counters are not yet charged anywhere.
pub fn optimal_ms_step(
    state: &mut AccelState,
    obj: &dyn Objective,
    oracle: &dyn MsOracle,
    cfg: &OptMsConfig,
) -> Result<(f64, OracleResult)> {
    let lambda_query = state.lambda_next_guess;
    let mut lam_p = lambda_query;
    let mut ap = a_prime(lam_p, state.a);
    let y = state.query_point(ap);
    let res = oracle.query(obj, &y, lam_p, state.t)?;
    if state.t == 0 {
        // The first guess is replaced by the first answer, making step one a down step.
        lam_p = res.lambda;
        ap = a_prime(lam_p, state.a);
    }
    let lam = res.lambda;
    let up = lam > lam_p;
    let big_prime = state.a + ap;
    let (a_step, gamma, new_x) = match (up, cfg.damping) {
        (false, _) | (true, Damping::Off) => (ap, 1.0, res.x.clone()),
        (true, Damping::ConvexCombination) => {
            let gamma = lam_p / lam;
            let a_step = gamma * ap;
            let big = state.a + a_step;
            let mut x = &state.x * ((1.0 - gamma) * state.a / big);
            x.scaled_add(gamma * big_prime / big, &res.x);
            (a_step, gamma, x)
        }
        (true, Damping::Argmin) => {
            let gamma = lam_p / lam;
            let x = if obj.value(&res.x)? <= obj.value(&state.x)? {
                res.x.clone()
            } else {
                state.x.clone()
            };
            (gamma * ap, gamma, x)
        }
    };
    state.v.scaled_add(-a_step, &res.grad_x);
    state.a += a_step;
    state.x = new_x;
    state.lambda_next_guess = if up {
        cfg.alpha * lam_p
    } else {
        lam_p / cfg.alpha
    };
    state.last = Some(StepInfo {
        a_step,
        a_prime: ap,
        gamma,
        lambda: lam,
        lambda_prime: lam_p,
        up,
        n: 0.5 * distance(&res.x, &y).powi(2),
    });
    state.t += 1;
    Ok((lambda_query, res))
}

fn validate_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Runs the bisection-free accelerated scheme from `x0` until the budget is spent.
///
/// Each outer iteration makes exactly one oracle call. Oracle errors end the
/// run and are returned together with the rows recorded so far.
pub fn optimal_ms_run(
    obj: &dyn Objective,
    x0: &Array1<f64>,
    oracle: &dyn MsOracle,
    cfg: &OptMsConfig,
    budget: Budget,
    reference: Option<&Reference>,
) -> RunResult {
    let mut rec = Recorder::new(obj, reference, budget);
    if let Err(e) = check_run_inputs(obj, x0, cfg.alpha, cfg.lambda0) {
        return Err(rec.fail(e, x0));
    }
    let mut state = AccelState::new(x0, cfg.lambda0);
    let first = RowExtras {
        a: Some(0.0),
        ..RowExtras::default()
    };
    if let Err(e) = rec.row(0, x0, Some(x0), first) {
        return Err(rec.fail(e, x0));
    }
    while !rec.done() {
        let t = state.t;
        let (lambda_query, res) = match optimal_ms_step(&mut state, obj, oracle, cfg) {
            Ok(r) => r,
            Err(e) => return Err(rec.fail(e, &state.x)),
        };
        let mut c = res.counters;
        if !res.grad_x_charged {
            c.gradient_evals += 1;
        }
        rec.charge(c);
        rec.call(CallRecord::new(t, lambda_query, &res));
        let info = state.last.expect("step recorded");
        let extras = RowExtras {
            a: Some(state.a),
            lambda: Some(info.lambda),
            lambda_prime: Some(info.lambda_prime),
            up: Some(info.up),
            n: Some(info.n),
        };
        if let Err(e) = rec.row(state.t, &state.x, Some(&state.v), extras) {
            return Err(rec.fail(e, &state.x));
        }
        if res.stationary {
            break;
        }
    }
    Ok(rec.finish(state.x))
}

fn check_run_inputs(obj: &dyn Objective, x0: &Array1<f64>, alpha: f64, lambda0: f64) -> Result<()> {
    obj.check_dim(x0)?;
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    validate_positive("lambda0", lambda0)
}

/// Settings of [`ms_bisection_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsBisectionConfig {
    /// Width of the acceptance window `[λ′/ρ, λ′]`.
    pub rho: f64,
    /// First warm-start guess `λ⁰₁`.
    pub lambda0: f64,
}

impl Default for MsBisectionConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            lambda0: DEFAULT_LAMBDA0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Probe {
    Valid,
    /// `λ < λ′/ρ`: the guess was too large.
    High,
    /// `λ > λ′`: the guess was too small.
    Low,
}

fn classify(lambda: f64, lambda_prime: f64, rho: f64) -> Probe {
    if lambda > lambda_prime {
        Probe::Low
    } else if lambda < lambda_prime / rho {
        Probe::High
    } else {
        Probe::Valid
    }
}

/// Runs the classical accelerated scheme with a bracketing search over `λ′`.
///
/// Each outer iteration probes `λ′` values, starting from a warm-start guess
/// that is doubled when the previous iteration's `λ` exceeded its guess and
/// halved otherwise. Probes are expanded by doubling or halving until the
/// valid window `λ ∈ [λ′/ρ, λ′]` is bracketed, then bisected at geometric
/// midpoints. Every probe counts as an oracle call against the budget; an
/// iteration cut short by the budget leaves no row.
pub fn ms_bisection_run(
    obj: &dyn Objective,
    x0: &Array1<f64>,
    oracle: &dyn MsOracle,
    cfg: &MsBisectionConfig,
    budget: Budget,
    reference: Option<&Reference>,
) -> RunResult {
    let mut rec = Recorder::new(obj, reference, budget);
    let valid = check_run_inputs(obj, x0, DEFAULT_ALPHA, cfg.lambda0).and_then(|_| {
        if cfg.rho > 1.0 && cfg.rho.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "rho must exceed 1, got {}",
                cfg.rho
            )))
        }
    });
    if let Err(e) = valid {
        return Err(rec.fail(e, x0));
    }
    let mut x = x0.clone();
    let mut v = x0.clone();
    let mut big_a = 0.0;
    let mut guess = cfg.lambda0;
    let first = RowExtras {
        a: Some(0.0),
        ..RowExtras::default()
    };
    if let Err(e) = rec.row(0, &x, Some(&v), first) {
        return Err(rec.fail(e, &x));
    }
    let mut t = 0usize;
    'outer: while !rec.done() {
        let mut lo: Option<f64> = None;
        let mut hi: Option<f64> = None;
        let mut lam_p = guess;
        let accepted = loop {
            if rec.calls_made() >= budget.max_oracle_calls {
                break 'outer;
            }
            if !(BRACKET_RANGE.0..=BRACKET_RANGE.1).contains(&lam_p) {
                let e = Error::Bisection(format!("lambda' search left [1e-30, 1e30] at {lam_p:e}"));
                return Err(rec.fail(e, &x));
            }
            let ap = a_prime(lam_p, big_a);
            let big_prime = big_a + ap;
            let mut y = &x * (big_a / big_prime);
            y.scaled_add(ap / big_prime, &v);
            let res = match oracle.query(obj, &y, lam_p, rec.calls_made()) {
                Ok(r) => r,
                Err(e) => return Err(rec.fail(e, &x)),
            };
            let mut c = res.counters;
            if !res.grad_x_charged {
                c.gradient_evals += 1;
            }
            rec.charge(c);
            rec.call(CallRecord::new(t, lam_p, &res));
            let kind = classify(res.lambda, lam_p, cfg.rho);
            if kind == Probe::Valid || res.stationary {
                break (lam_p, ap, y, res);
            }
            match kind {
                Probe::Low => lo = Some(lo.map_or(lam_p, |l: f64| l.max(lam_p))),
                Probe::High => hi = Some(hi.map_or(lam_p, |h: f64| h.min(lam_p))),
                Probe::Valid => unreachable!(),
            }
            lam_p = match (lo, hi) {
                (Some(l), Some(h)) => {
                    if h <= l * (1.0 + 1e-12) {
                        let e = Error::Bisection(format!(
                            "bracket [{l:e}, {h:e}] collapsed without a valid lambda'"
                        ));
                        return Err(rec.fail(e, &x));
                    }
                    (l * h).sqrt()
                }
                (Some(l), None) => 2.0 * l,
                (None, Some(h)) => 0.5 * h,
                (None, None) => unreachable!(),
            };
        };
        let (lam_p, ap, y, res) = accepted;
        if res.lambda > guess {
            guess *= 2.0;
        } else {
            guess *= 0.5;
        }
        v.scaled_add(-ap, &res.grad_x);
        big_a += ap;
        let n = 0.5 * distance(&res.x, &y).powi(2);
        x = res.x;
        t += 1;
        let extras = RowExtras {
            a: Some(big_a),
            lambda: Some(res.lambda),
            lambda_prime: Some(lam_p),
            up: Some(res.lambda > lam_p),
            n: Some(n),
        };
        if let Err(e) = rec.row(t, &x, Some(&v), extras) {
            return Err(rec.fail(e, &x));
        }
        if res.stationary {
            break;
        }
    }
    Ok(rec.finish(x))
}

/// Outcome of [`audit_potential`].
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialAudit {
    pub steps_checked: usize,
    /// Smallest `(rhs − lhs)/(|A_t E_t| + D_t)` over all steps.
    pub worst_relative_slack: f64,
    /// Row `t + 1` of every step that violated the potential decrease.
    pub violations: Vec<usize>,
    /// `√A_T`.
    pub sqrt_a_final: f64,
    /// `((√α − 1)/(4α))·Σ_t 1/√λ′_t`.
    pub growth_bound: f64,
    pub growth_holds: bool,
    /// `½·Σ_{down steps} 1/√λ′_t`.
    pub down_bound: f64,
    pub down_bound_holds: bool,
}

impl PotentialAudit {
    pub fn pass(&self) -> bool {
        self.violations.is_empty() && self.growth_holds && self.down_bound_holds
    }
}

fn need(v: Option<f64>, what: &str, t: usize) -> Result<f64> {
    v.ok_or_else(|| Error::AuditInput(format!("row {t} lacks {what}")))
}

/// Checks the per-step potential decrease
///
/// ```text
/// A_{t+1}E_{t+1} + D_{t+1} + (1−σ²)·A′_{t+1}·min(λ_{t+1}, λ′_{t+1})·N_{t+1} ≤ A_t E_t + D_t
/// ```
///
/// with `A′_{t+1} = A_t + a′(λ′_{t+1}, A_t)` and tolerance
/// `1e-8·(|A_t E_t| + D_t)`, plus the growth bounds
/// `√A_T ≥ ((√α−1)/(4α))·Σ_{t≥1} 1/√λ′_t` and
/// `√A_T ≥ ½·Σ_{down steps} 1/√λ′_t`, each with slack `1e-8·√A_T`.
///
/// The inequality holds for any convex `f` and any reference point, so an
/// inexact reference only matters through rounding.
pub fn audit_potential(records: &[TraceRecord], sigma: f64, alpha: f64) -> Result<PotentialAudit> {
    if records.is_empty() {
        return Err(Error::AuditInput("empty trace".into()));
    }
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::AuditInput(format!(
            "sigma must lie in [0, 1), got {sigma}"
        )));
    }
    if !(alpha > 1.0) {
        return Err(Error::AuditInput(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    let mut worst = f64::INFINITY;
    let mut violations = Vec::new();
    let mut growth_sum = 0.0;
    let mut down_sum = 0.0;
    for pair in records.windows(2) {
        let (r0, r1) = (&pair[0], &pair[1]);
        let a0 = need(r0.a, "A", r0.t)?;
        let e0 = need(r0.e, "E", r0.t)?;
        let d0 = need(r0.d, "D", r0.t)?;
        let a1 = need(r1.a, "A", r1.t)?;
        let e1 = need(r1.e, "E", r1.t)?;
        let d1 = need(r1.d, "D", r1.t)?;
        let n1 = need(r1.n, "N", r1.t)?;
        let lam = need(r1.lambda, "lambda", r1.t)?;
        let lam_p = need(r1.lambda_prime, "lambda_prime", r1.t)?;
        let big_prime = a0 + a_prime(lam_p, a0);
        let lhs = a1 * e1 + d1 + (1.0 - sigma * sigma) * big_prime * lam.min(lam_p) * n1;
        let rhs = a0 * e0 + d0;
        let scale = (a0 * e0).abs() + d0;
        let rel = if scale > 0.0 {
            (rhs - lhs) / scale
        } else {
            rhs - lhs
        };
        worst = worst.min(rel);
        if lhs > rhs + AUDIT_REL_TOL * scale || !lhs.is_finite() {
            violations.push(r1.t);
        }
        let inv = 1.0 / lam_p.sqrt();
        growth_sum += inv;
        if lam <= lam_p {
            down_sum += inv;
        }
    }
    let last = records.last().expect("non-empty");
    let sqrt_a = need(last.a, "A", last.t)?.sqrt();
    let growth_bound = (alpha.sqrt() - 1.0) / (4.0 * alpha) * growth_sum;
    let down_bound = 0.5 * down_sum;
    let slack = AUDIT_REL_TOL * sqrt_a;
    Ok(PotentialAudit {
        steps_checked: records.len() - 1,
        worst_relative_slack: worst,
        violations,
        sqrt_a_final: sqrt_a,
        growth_bound,
        growth_holds: sqrt_a >= growth_bound - slack,
        down_bound,
        down_bound_holds: sqrt_a >= down_bound - slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_prime_examples() {
        assert_eq!(a_prime(1.0, 0.0), 1.0);
        assert_eq!(a_prime(1.0, 2.0), 2.0);
        assert_eq!(a_prime(4.0, 0.0), 0.25);
    }

    #[test]
    fn a_prime_solves_defining_quadratic() {
        for &(lp, a) in &[(1e-8, 3.0), (0.1, 0.0), (7.0, 1e6), (1e3, 1e-9)] {
            let ap = a_prime(lp, a);
            let rel = (lp * ap * ap - (a + ap)).abs() / (a + ap);
            assert!(rel < 1e-12, "{lp} {a} {rel}");
        }
    }

    #[test]
    fn classify_window() {
        assert_eq!(classify(1.0, 1.0, 4.0), Probe::Valid);
        assert_eq!(classify(0.25, 1.0, 4.0), Probe::Valid);
        assert_eq!(classify(0.2, 1.0, 4.0), Probe::High);
        assert_eq!(classify(1.1, 1.0, 4.0), Probe::Low);
    }

    #[test]
    fn audit_rejects_missing_fields() {
        let row = TraceRecord {
            t: 0,
            f: 1.0,
            gap: None,
            a: Some(0.0),
            lambda: None,
            lambda_prime: None,
            up: None,
            e: None,
            d: None,
            n: None,
            counters: Counters::default(),
            wall_ms: 0.0,
        };
        let mut next = row.clone();
        next.t = 1;
        assert!(matches!(
            audit_potential(&[row, next], 0.5, 2.0),
            Err(Error::AuditInput(_))
        ));
        assert!(audit_potential(&[], 0.5, 2.0).is_err());
    }
}
