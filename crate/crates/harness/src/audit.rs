//! Invariant checks over a finished trace.

use msaccel::accel::audit_potential;
use msaccel::oracles::{amsn_solve_bound, MS_AUDIT_SLACK};
use msaccel::TraceRecord;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// One oracle call as logged in the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLog {
    pub t: usize,
    pub lambda_query: f64,
    pub lambda: f64,
    pub hess_evals: u64,
    pub lin_solves: u64,
    pub hvps: u64,
    pub grad_evals: u64,
    pub floor_hit: bool,
    pub ms_residual: f64,
    pub step_norm: f64,
}

impl From<&msaccel::accel::CallRecord> for CallLog {
    fn from(c: &msaccel::accel::CallRecord) -> Self {
        Self {
            t: c.t,
            lambda_query: c.lambda_query,
            lambda: c.lambda,
            hess_evals: c.counters.hessian_evals,
            lin_solves: c.counters.linear_solves,
            hvps: c.counters.hvps,
            grad_evals: c.counters.gradient_evals,
            floor_hit: c.floor_hit,
            ms_residual: c.ms_residual,
            step_norm: c.step_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSection {
    pub pass: bool,
    pub steps_checked: usize,
    pub worst_relative_slack: f64,
    pub violations: Vec<usize>,
    pub sqrt_a_final: f64,
    pub growth_bound: f64,
    pub growth_holds: bool,
    pub down_bound: f64,
    pub down_bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveBoundSection {
    pub pass: bool,
    pub calls_checked: usize,
    pub floor_calls: usize,
    /// Indices into the call log of calls over the bound.
    pub violations: Vec<usize>,
    /// Smallest `ceil(bound) − solves` over checked calls.
    pub worst_slack: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsSection {
    pub pass: bool,
    pub sigma: f64,
    pub calls_checked: usize,
    pub violations: Vec<usize>,
    /// Largest `ms_residual / step_norm` over calls with a nonzero step.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pass: bool,
    pub potential: Option<PotentialSection>,
    pub solve_bound: Option<SolveBoundSection>,
    pub ms: Option<MsSection>,
}

/// What to check and with which constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSpec {
    /// `None` uses the largest observed residual ratio.
    pub sigma: Option<f64>,
    pub alpha: f64,
    pub potential: bool,
    /// Whether the growth bounds count towards the verdict.
    pub growth: bool,
    pub solve_bound: bool,
}

fn worst_ratio(calls: &[CallLog]) -> f64 {
    calls
        .iter()
        .filter(|c| c.step_norm > 0.0)
        .map(|c| c.ms_residual / c.step_norm)
        .fold(0.0, f64::max)
}

pub fn check_ms(calls: &[CallLog], sigma: f64) -> MsSection {
    let violations: Vec<usize> = calls
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            !(c.ms_residual <= sigma * c.step_norm + MS_AUDIT_SLACK * (1.0 + c.step_norm))
        })
        .map(|(i, _)| i)
        .collect();
    MsSection {
        pass: violations.is_empty() && sigma < 1.0,
        sigma,
        calls_checked: calls.len(),
        violations,
        worst_ratio: worst_ratio(calls),
    }
}

/// Per-call linear-solve count against `ceil(2 + 2·log₂(1 + |log₂(λ/λ′)|))`,
/// skipping calls that stopped at the λ floor.
pub fn check_solve_bound(calls: &[CallLog]) -> SolveBoundSection {
    let mut violations = Vec::new();
    let mut worst = i64::MAX;
    let mut checked = 0;
    let mut floor = 0;
    for (i, c) in calls.iter().enumerate() {
        if c.floor_hit {
            floor += 1;
            continue;
        }
        checked += 1;
        let bound = amsn_solve_bound(c.lambda, c.lambda_query).ceil() as i64;
        let slack = bound - c.lin_solves as i64;
        worst = worst.min(slack);
        if slack < 0 {
            violations.push(i);
        }
    }
    SolveBoundSection {
        pass: violations.is_empty(),
        calls_checked: checked,
        floor_calls: floor,
        violations,
        worst_slack: if checked == 0 { 0 } else { worst },
    }
}

pub fn check_potential(
    records: &[TraceRecord],
    sigma: f64,
    alpha: f64,
    growth: bool,
) -> Result<PotentialSection> {
    let a =
        audit_potential(records, sigma, alpha).map_err(|e| HarnessError::Audit(e.to_string()))?;
    let pass = a.violations.is_empty() && (!growth || (a.growth_holds && a.down_bound_holds));
    Ok(PotentialSection {
        pass,
        steps_checked: a.steps_checked,
        worst_relative_slack: a.worst_relative_slack,
        violations: a.violations,
        sqrt_a_final: a.sqrt_a_final,
        growth_bound: a.growth_bound,
        growth_holds: a.growth_holds,
        down_bound: a.down_bound,
        down_bound_holds: a.down_bound_holds,
    })
}

/// Runs every requested check. The MS check always runs when calls are given.
pub fn audit(
    records: &[TraceRecord],
    calls: Option<&[CallLog]>,
    spec: AuditSpec,
) -> Result<AuditReport> {
    let sigma = match (spec.sigma, calls) {
        (Some(s), _) => s,
        (None, Some(c)) => worst_ratio(c),
        (None, None) => {
            return Err(HarnessError::Audit(
                "no sigma given and no call log to estimate it from".into(),
            ));
        }
    };
    let ms = calls.map(|c| check_ms(c, sigma));
    let solve_bound = match calls {
        Some(c) if spec.solve_bound => Some(check_solve_bound(c)),
        _ => None,
    };
    let potential = if spec.potential {
        Some(check_potential(
            records,
            sigma.min(1.0 - f64::EPSILON),
            spec.alpha,
            spec.growth,
        )?)
    } else {
        None
    };
    let pass = ms.as_ref().map_or(true, |s| s.pass)
        && solve_bound.as_ref().map_or(true, |s| s.pass)
        && potential.as_ref().map_or(true, |s| s.pass);
    Ok(AuditReport {
        pass,
        potential,
        solve_bound,
        ms,
    })
}

impl AuditReport {
    /// Human-readable lines, one per section.
    pub fn lines(&self) -> Vec<String> {
        let verdict = |p: bool| if p { "pass" } else { "FAIL" };
        let mut out = Vec::new();
        if let Some(p) = &self.potential {
            out.push(format!(
                "potential: {} ({} steps, worst relative slack {:.3e}, violations at rows {:?})",
                verdict(p.pass),
                p.steps_checked,
                p.worst_relative_slack,
                p.violations
            ));
            out.push(format!(
                "growth: sqrt(A_T) = {:.6e}, bound {:.6e} ({}), down-step bound {:.6e} ({})",
                p.sqrt_a_final,
                p.growth_bound,
                verdict(p.growth_holds),
                p.down_bound,
                verdict(p.down_bound_holds)
            ));
        }
        if let Some(s) = &self.solve_bound {
            out.push(format!(
                "solve bound: {} ({} calls checked, {} at the floor, worst slack {}, violations {:?})",
                verdict(s.pass),
                s.calls_checked,
                s.floor_calls,
                s.worst_slack,
                s.violations
            ));
        }
        if let Some(m) = &self.ms {
            out.push(format!(
                "ms condition: {} (sigma {}, {} calls, worst ratio {:.6e}, violations {:?})",
                verdict(m.pass),
                m.sigma,
                m.calls_checked,
                m.worst_ratio,
                m.violations
            ));
        }
        out.push(format!("audit: {}", verdict(self.pass)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(lambda_query: f64, lambda: f64, lin_solves: u64, floor_hit: bool) -> CallLog {
        CallLog {
            t: 0,
            lambda_query,
            lambda,
            hess_evals: 1,
            lin_solves,
            hvps: 0,
            grad_evals: lin_solves + 1,
            floor_hit,
            ms_residual: 0.1,
            step_norm: 1.0,
        }
    }

    #[test]
    fn solve_bound_integer_comparison() {
        // λ = λ′ gives bound 2; λ = 4λ′ gives 2 + 2·log₂3 ≈ 5.17, ceiling 6
        let calls = [
            call(1.0, 1.0, 2, false),
            call(1.0, 4.0, 6, false),
            call(1.0, 4.0, 7, false),
            call(1.0, 1e-9, 40, true),
        ];
        let s = check_solve_bound(&calls);
        assert_eq!(s.violations, vec![2]);
        assert_eq!(s.calls_checked, 3);
        assert_eq!(s.floor_calls, 1);
        assert_eq!(s.worst_slack, -1);
    }

    #[test]
    fn ms_check_uses_slack() {
        let mut c = call(1.0, 1.0, 1, false);
        c.ms_residual = 0.5 + 1e-10;
        assert!(check_ms(&[c.clone()], 0.5).pass);
        c.ms_residual = 0.5 + 1e-8;
        assert_eq!(check_ms(&[c], 0.5).violations, vec![0]);
    }
}
