//! Command-line experiment runner for `msaccel`.
//!
//! [`run::run_experiment`] turns an [`config::ExperimentConfig`] into a trace
//! and a JSON summary; [`audit_trace`] re-checks a trace written earlier.

pub mod audit;
pub mod config;
pub mod error;
pub mod problem;
pub mod reference;
pub mod run;
pub mod trace;

use std::path::Path;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use run::{run_experiment, RunOutput, Summary};

use audit::{AuditReport, AuditSpec};

/// Audits a CSV trace from disk. With a summary, the call log is checked too
/// and `data` (if given) must match the summary's data spec.
pub fn audit_trace(
    trace: &Path,
    summary: Option<&Path>,
    data: Option<&str>,
    sigma: Option<f64>,
    alpha: f64,
) -> Result<AuditReport> {
    let records = trace::read_csv(std::fs::File::open(trace)?)?;
    let summary: Option<Summary> = match summary {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| HarnessError::Parse(format!("{}: {e}", p.display())))?,
            )
        }
        None => None,
    };
    if let (Some(d), Some(s)) = (data, &summary) {
        if s.config.data != d {
            return Err(HarnessError::Config(format!(
                "--data {d:?} does not match the run's data {:?}",
                s.config.data
            )));
        }
    }
    let calls = summary.as_ref().map(|s| s.calls.as_slice());
    let has_a = records.iter().skip(1).any(|r| r.a.is_some());
    let spec = AuditSpec {
        sigma,
        alpha,
        potential: has_a,
        growth: false,
        solve_bound: summary.as_ref().is_some_and(|s| {
            s.config.oracle == config::OracleTag::Amsn && s.config.method.uses_oracle()
        }),
    };
    audit::audit(&records, calls, spec)
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
mod book_harness {}
