//! Comparison methods: cubic regularization and its accelerated variant,
//! Newton, gradient descent with and without momentum, a fixed-schedule MS
//! scheme, and plain iteration of the adaptive Newton oracles.

use ndarray::Array1;

use crate::accel::{Budget, CallRecord, Recorder, Reference, RowExtras, RunResult, RunTrace};
use crate::error::{Error, Result};
use crate::linalg::{distance, norm, reg_newton_step};
use crate::objectives::Objective;
use crate::oracles::{amsn, amsn_fo, cr_oracle, Counters, OracleResult, LAMBDA_NEWTON};

/// Step-size grid for gradient methods.
pub const STEP_SIZE_GRID: [f64; 7] = [3.0, 10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0];

/// Newton steps used to estimate the distance to the optimum for [`Method::Song`].
pub const SONG_DISTANCE_STEPS: usize = 20;

/// A baseline method and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// `x_{t+1} = O_cr(x_t)` with cubic parameter `m`.
    Cr {
        m: f64,
    },
    /// Accelerated cubic regularization for a Hessian-Lipschitz estimate `h`.
    Acr {
        h: f64,
    },
    /// `(∇²f + LAMBDA_NEWTON·I) w = −∇f`, full step.
    Newton,
    Gd {
        eta: f64,
    },
    /// Nesterov's momentum with the `t_{k+1} = (1 + √(1 + 4t_k²))/2` sequence.
    Agd {
        eta: f64,
    },
    /// MS update with the fixed schedule `A_t = (t/3)^{7/2}/(2hr)` and cubic steps with `M = 2h`.
    Song {
        h: f64,
        r: f64,
    },
    /// `x_{t+1}, λ_{t+1} = aMSN(x_t; λ_t/2)`, eager.
    IterateAmsn {
        lambda1: f64,
        sigma: f64,
    },
    /// `x_{t+1}, λ_{t+1} = aMSN-fo(x_t; λ_t/2)`, lazy.
    IterateAmsnFo {
        lambda1: f64,
        sigma: f64,
    },
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Cr { .. } => "CR",
            Method::Acr { .. } => "ACR",
            Method::Newton => "NEWTON",
            Method::Gd { .. } => "GD",
            Method::Agd { .. } => "AGD",
            Method::Song { .. } => "SONG",
            Method::IterateAmsn { .. } => "ITERATE_AMSN",
            Method::IterateAmsnFo { .. } => "ITERATE_AMSN_FO",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        let unit = |v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "sigma must lie in (0, 1), got {v}"
                )))
            }
        };
        match *self {
            Method::Cr { m } => positive("M", m),
            Method::Acr { h } => positive("H", h),
            Method::Newton => Ok(()),
            Method::Gd { eta } | Method::Agd { eta } => positive("eta", eta),
            Method::Song { h, r } => positive("H", h).and(positive("R", r)),
            Method::IterateAmsn { lambda1, sigma } | Method::IterateAmsnFo { lambda1, sigma } => {
                positive("lambda1", lambda1).and(unit(sigma))
            }
        }
    }
}

fn charged(r: &OracleResult) -> Counters {
    let mut c = r.counters;
    if !r.grad_x_charged {
        c.gradient_evals += 1;
    }
    c
}

fn plain_step(t: usize, lambda: f64, counters: Counters) -> CallRecord {
    CallRecord {
        t,
        lambda_query: lambda,
        lambda,
        counters,
        floor_hit: false,
        ms_residual: 0.0,
        step_norm: 0.0,
    }
}

fn oracle_step(t: usize, lambda_query: f64, r: &OracleResult) -> CallRecord {
    CallRecord {
        t,
        lambda_query,
        lambda: r.lambda,
        counters: r.counters,
        floor_hit: r.floor_hit,
        ms_residual: r.ms_residual,
        step_norm: r.step_norm,
    }
}

/// Runs a baseline from `x0`. Every iteration counts as one call against
/// `budget.max_oracle_calls`.
pub fn baseline_run(
    obj: &dyn Objective,
    x0: &Array1<f64>,
    method: &Method,
    budget: Budget,
    reference: Option<&Reference>,
) -> RunResult {
    let mut rec = Recorder::new(obj, reference, budget);
    if let Err(e) = method.validate().and_then(|_| obj.check_dim(x0)) {
        return Err(rec.fail(e, x0));
    }
    let song = matches!(method, Method::Song { .. });
    let start = RowExtras {
        a: song.then_some(0.0),
        ..RowExtras::default()
    };
    let v0 = song.then_some(x0);
    if let Err(e) = rec.row(0, x0, v0, start) {
        return Err(rec.fail(e, x0));
    }
    let mut x = x0.clone();
    let outcome = match *method {
        Method::Cr { m } => cr_loop(&mut rec, obj, &mut x, m),
        Method::Acr { h } => acr_loop(&mut rec, obj, &mut x, h),
        Method::Newton => newton_loop(&mut rec, obj, &mut x),
        Method::Gd { eta } => gd_loop(&mut rec, obj, &mut x, eta),
        Method::Agd { eta } => agd_loop(&mut rec, obj, &mut x, eta),
        Method::Song { h, r } => song_loop(&mut rec, obj, &mut x, h, r),
        Method::IterateAmsn { lambda1, sigma } => {
            iterate_loop(&mut rec, obj, &mut x, lambda1, sigma, false)
        }
        Method::IterateAmsnFo { lambda1, sigma } => {
            iterate_loop(&mut rec, obj, &mut x, lambda1, sigma, true)
        }
    };
    match outcome {
        Ok(()) => Ok(rec.finish(x)),
        Err(e) => Err(rec.fail(e, &x)),
    }
}

/// Which adaptive oracle [`iterate_oracle_run`] repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterateOracle {
    Amsn,
    AmsnFo,
}

/// Iterates an adaptive oracle, querying each call at half the previous `λ`.
/// The second-order oracle runs eagerly and the matrix-free one lazily.
pub fn iterate_oracle_run(
    obj: &dyn Objective,
    x0: &Array1<f64>,
    which: IterateOracle,
    lambda1: f64,
    sigma: f64,
    budget: Budget,
    reference: Option<&Reference>,
) -> RunResult {
    let method = match which {
        IterateOracle::Amsn => Method::IterateAmsn { lambda1, sigma },
        IterateOracle::AmsnFo => Method::IterateAmsnFo { lambda1, sigma },
    };
    baseline_run(obj, x0, &method, budget, reference)
}

fn cr_loop(rec: &mut Recorder, obj: &dyn Objective, x: &mut Array1<f64>, m: f64) -> Result<()> {
    let mut t = 0;
    while !rec.done() {
        let r = cr_oracle(obj, x, m)?;
        rec.charge(charged(&r));
        rec.call(oracle_step(t, r.lambda, &r));
        *x = r.x;
        t += 1;
        let extras = RowExtras {
            lambda: Some(r.lambda),
            ..RowExtras::default()
        };
        rec.row(t, x, None, extras)?;
        if r.stationary {
            break;
        }
    }
    Ok(())
}

fn newton_loop(rec: &mut Recorder, obj: &dyn Objective, x: &mut Array1<f64>) -> Result<()> {
    let mut t = 0;
    while !rec.done() {
        let g = obj.gradient(x)?;
        let h = obj.hessian(x)?;
        let c = Counters {
            hessian_evals: 1,
            linear_solves: 1,
            gradient_evals: 1,
            ..Counters::default()
        };
        rec.charge(c);
        rec.call(plain_step(t, LAMBDA_NEWTON, c));
        let stationary = g.iter().all(|&v| v == 0.0);
        if !stationary {
            let w = reg_newton_step(&h, &g, LAMBDA_NEWTON)?;
            *x += &w;
        }
        t += 1;
        rec.row(t, x, None, RowExtras::default())?;
        if stationary {
            break;
        }
    }
    Ok(())
}

fn gd_loop(rec: &mut Recorder, obj: &dyn Objective, x: &mut Array1<f64>, eta: f64) -> Result<()> {
    let mut t = 0;
    while !rec.done() {
        let g = obj.gradient(x)?;
        let c = Counters {
            gradient_evals: 1,
            ..Counters::default()
        };
        rec.charge(c);
        rec.call(plain_step(t, 1.0 / eta, c));
        x.scaled_add(-eta, &g);
        t += 1;
        rec.row(t, x, None, RowExtras::default())?;
    }
    Ok(())
}

fn agd_loop(rec: &mut Recorder, obj: &dyn Objective, x: &mut Array1<f64>, eta: f64) -> Result<()> {
    let mut y = x.clone();
    let mut tk = 1.0f64;
    let mut t = 0;
    while !rec.done() {
        let g = obj.gradient(&y)?;
        let c = Counters {
            gradient_evals: 1,
            ..Counters::default()
        };
        rec.charge(c);
        rec.call(plain_step(t, 1.0 / eta, c));
        let mut x_next = y.clone();
        x_next.scaled_add(-eta, &g);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let momentum = (tk - 1.0) / t_next;
        y = &x_next + &((&x_next - &*x) * momentum);
        *x = x_next;
        tk = t_next;
        t += 1;
        rec.row(t, x, None, RowExtras::default())?;
    }
    Ok(())
}

/// Nesterov's accelerated cubic regularization with `M = 2h` and `N = 12h`.
///
/// `x₁ = T_M(x₀)`; afterwards `v_k = argmin ψ_k`, `y_k = (k x_k + 3 v_k)/(k + 3)`,
/// `x_{k+1} = T_M(y_k)`, where `ψ_k(x) = ⟨s_k, x⟩ + (N/6)‖x − x₀‖³` up to
/// constants and `s_{k+1} = s_k + ((k+1)(k+2)/2)∇f(x_{k+1})`.
fn acr_loop(rec: &mut Recorder, obj: &dyn Objective, x: &mut Array1<f64>, h: f64) -> Result<()> {
    let m = 2.0 * h;
    let big_n = 12.0 * h;
    let x0 = x.clone();
    let mut s = Array1::<f64>::zeros(x.len());
    let mut t = 0usize;
    while !rec.done() {
        let y = if t == 0 {
            x0.clone()
        } else {
            let k = t as f64;
            let s_norm = norm(&s);
            let mut v = x0.clone();
            if s_norm > 0.0 {
                v.scaled_add(-(2.0 / (big_n * s_norm)).sqrt(), &s);
            }
            let mut y = &*x * (k / (k + 3.0));
            y.scaled_add(3.0 / (k + 3.0), &v);
            y
        };
        let r = cr_oracle(obj, &y, m)?;
        rec.charge(charged(&r));
        rec.call(oracle_step(t, r.lambda, &r));
        let k1 = (t + 1) as f64;
        if t > 0 {
            s.scaled_add(k1 * (k1 + 1.0) / 2.0, &r.grad_x);
        }
        *x = r.x.clone();
        t += 1;
        let extras = RowExtras {
            lambda: Some(r.lambda),
            ..RowExtras::default()
        };
        rec.row(t, x, None, extras)?;
        if r.stationary && t > 1 {
            break;
        }
    }
    Ok(())
}

/// `A_t = (t/3)^{7/2} / (2hr)`.
pub fn song_schedule(t: usize, h: f64, r: f64) -> f64 {
    (t as f64 / 3.0).powf(3.5) / (2.0 * h * r)
}

fn song_loop(
    rec: &mut Recorder,
    obj: &dyn Objective,
    x: &mut Array1<f64>,
    h: f64,
    r: f64,
) -> Result<()> {
    let mut v = x.clone();
    let mut t = 0usize;
    while !rec.done() {
        let a_t = song_schedule(t, h, r);
        let a_next = song_schedule(t + 1, h, r);
        let a = a_next - a_t;
        let lambda_prime = a_next / (a * a);
        let mut y = &*x * (a_t / a_next);
        y.scaled_add(a / a_next, &v);
        let res = cr_oracle(obj, &y, 2.0 * h)?;
        rec.charge(charged(&res));
        rec.call(oracle_step(t, lambda_prime, &res));
        v.scaled_add(-a, &res.grad_x);
        let n = 0.5 * distance(&res.x, &y).powi(2);
        *x = res.x;
        t += 1;
        let extras = RowExtras {
            a: Some(a_next),
            lambda: Some(res.lambda),
            lambda_prime: Some(lambda_prime),
            up: Some(res.lambda > lambda_prime),
            n: Some(n),
        };
        rec.row(t, x, Some(&v), extras)?;
        if res.stationary {
            break;
        }
    }
    Ok(())
}

fn iterate_loop(
    rec: &mut Recorder,
    obj: &dyn Objective,
    x: &mut Array1<f64>,
    lambda1: f64,
    sigma: f64,
    first_order: bool,
) -> Result<()> {
    let mut query = lambda1;
    let mut t = 0usize;
    while !rec.done() {
        let r = if first_order {
            amsn_fo(obj, x, query, sigma, None)?
        } else {
            amsn(obj, x, query, sigma, false)?
        };
        rec.charge(charged(&r));
        rec.call(oracle_step(t, query, &r));
        query = 0.5 * r.lambda;
        *x = r.x.clone();
        t += 1;
        let extras = RowExtras {
            lambda: Some(r.lambda),
            ..RowExtras::default()
        };
        rec.row(t, x, None, extras)?;
        if r.stationary {
            break;
        }
    }
    Ok(())
}

/// `‖x_K − x₀‖` after `steps` Newton iterations from `x0`, used as the
/// distance-to-optimum estimate of [`Method::Song`].
pub fn newton_distance_estimate(
    obj: &dyn Objective,
    x0: &Array1<f64>,
    steps: usize,
) -> Result<f64> {
    let mut x = x0.clone();
    for _ in 0..steps {
        let g = obj.gradient(&x)?;
        if g.iter().all(|&v| v == 0.0) {
            break;
        }
        let h = obj.hessian(&x)?;
        x += &reg_newton_step(&h, &g, LAMBDA_NEWTON)?;
    }
    let r = distance(&x, x0);
    if !r.is_finite() {
        return Err(Error::Divergence {
            step: steps,
            reason: "Newton distance estimate is not finite".into(),
        });
    }
    Ok(r)
}

/// Minimizer found by damped Newton iteration.
#[derive(Debug, Clone)]
pub struct NewtonSolve {
    pub x: Array1<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Newton's method with Armijo backtracking, run until `‖∇f‖ ≤ tol`, the
/// iteration cap, or a step that no longer decreases `f`.
pub fn newton_minimize(
    obj: &dyn Objective,
    x0: &Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonSolve> {
    obj.check_dim(x0)?;
    let mut x = x0.clone();
    let mut f = obj.value(&x)?;
    let mut g = obj.gradient(&x)?;
    let mut iterations = 0;
    while norm(&g) > tol && iterations < max_iter {
        let h = obj.hessian(&x)?;
        let w = reg_newton_step(&h, &g, LAMBDA_NEWTON)?;
        let slope = g.dot(&w);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &(&w * step);
            let fc = obj.value(&cand)?;
            if fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, fc)) => {
                let g_new = obj.gradient(&cand)?;
                // Near the optimum rounding makes f flat; keep going only while the gradient shrinks.
                if fc >= f && norm(&g_new) >= norm(&g) {
                    break;
                }
                x = cand;
                f = fc;
                g = g_new;
            }
            None => {
                let cand = &x + &w;
                let g_new = obj.gradient(&cand)?;
                if norm(&g_new) < norm(&g) {
                    x = cand;
                    g = g_new;
                    f = obj.value(&x)?;
                } else {
                    break;
                }
            }
        }
    }
    let grad_norm = norm(&g);
    if grad_norm > tol {
        log::warn!(
            "Newton reference stopped at gradient norm {grad_norm:e} after {iterations} iterations"
        );
    }
    Ok(NewtonSolve {
        x,
        grad_norm,
        iterations,
    })
}

/// Outcome of [`tune_step_size`].
#[derive(Debug, Clone)]
pub struct Tuned {
    pub eta: f64,
    pub trace: RunTrace,
    /// The grid had to be extended because the best value sat on its edge.
    pub extended: bool,
    /// Final gap (or objective value without a reference) for every step size tried.
    pub scores: Vec<(f64, f64)>,
}

/// Runs GD or AGD for every step size in `grid` and keeps the best final
/// gap. If the winner lies on the edge of the grid, the grid is extended once
/// in that direction by the edge ratio and the extension is accepted as is.
pub fn tune_step_size(
    obj: &dyn Objective,
    x0: &Array1<f64>,
    momentum: bool,
    grid: &[f64],
    budget: Budget,
    reference: Option<&Reference>,
) -> Result<Tuned> {
    if grid.len() < 2 {
        return Err(Error::InvalidInput(
            "step-size grid needs at least two values".into(),
        ));
    }
    let method = |eta: f64| {
        if momentum {
            Method::Agd { eta }
        } else {
            Method::Gd { eta }
        }
    };
    let score = |t: &RunTrace| match t.records.last() {
        Some(r) => r.gap.unwrap_or(r.f),
        None => f64::INFINITY,
    };
    let mut scores = Vec::new();
    let mut best: Option<(f64, RunTrace, f64)> = None;
    let try_eta =
        |eta: f64, scores: &mut Vec<(f64, f64)>, best: &mut Option<(f64, RunTrace, f64)>| {
            let (s, trace) = match baseline_run(obj, x0, &method(eta), budget, reference) {
                Ok(tr) => (score(&tr), tr),
                Err(e) => (f64::INFINITY, e.trace),
            };
            let s = if s.is_nan() { f64::INFINITY } else { s };
            scores.push((eta, s));
            if best.as_ref().map_or(true, |(_, _, b)| s < *b) {
                *best = Some((eta, trace, s));
            }
        };
    for &eta in grid {
        try_eta(eta, &mut scores, &mut best);
    }
    let (eta, _, _) = best.as_ref().expect("grid is non-empty");
    let eta = *eta;
    let mut extended = false;
    let first = grid[0];
    let last = grid[grid.len() - 1];
    if eta == first || eta == last {
        let ext = if eta == first {
            first * first / grid[1]
        } else {
            last * last / grid[grid.len() - 2]
        };
        log::warn!("best step size {eta} is on the grid edge; also trying {ext}");
        try_eta(ext, &mut scores, &mut best);
        extended = true;
    }
    let (eta, trace, _) = best.expect("grid is non-empty");
    Ok(Tuned {
        eta,
        trace,
        extended,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_quadratic;
    use ndarray::{array, Array2};

    #[test]
    fn song_schedule_example() {
        assert!((song_schedule(3, 1.0, 0.5) - 1.0).abs() < 1e-15);
        assert_eq!(song_schedule(0, 1.0, 0.5), 0.0);
    }

    #[test]
    fn validation() {
        assert!(Method::Gd { eta: 0.0 }.validate().is_err());
        assert!(Method::Cr { m: -1.0 }.validate().is_err());
        assert!(Method::IterateAmsn {
            lambda1: 0.1,
            sigma: 1.0
        }
        .validate()
        .is_err());
        assert!(Method::Newton.validate().is_ok());
    }

    #[test]
    fn newton_minimize_quadratic() {
        let f = make_quadratic(array![[1.0, 0.0], [0.0, 4.0]], array![1.0, 1.0]).unwrap();
        let s = newton_minimize(&f, &Array1::zeros(2), 1e-13, 50).unwrap();
        assert!(distance(&s.x, &array![1.0, 0.25]) < 1e-12);
    }

    #[test]
    fn gd_on_identity_contracts() {
        let f = make_quadratic(Array2::eye(2), Array1::zeros(2)).unwrap();
        let x0 = array![1.0, -2.0];
        let tr = baseline_run(&f, &x0, &Method::Gd { eta: 0.25 }, Budget::calls(5), None).unwrap();
        let expected = &x0 * 0.75f64.powi(5);
        assert!(distance(&tr.final_x, &expected) < 1e-15);
    }
}
