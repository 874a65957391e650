use std::path::{Path, PathBuf};
use std::time::Instant;

use msaccel::accel::{ms_bisection_run, optimal_ms_run, MsBisectionConfig, OptMsConfig, RunTrace};
use msaccel::baselines::{
    baseline_run, newton_distance_estimate, tune_step_size, Method, SONG_DISTANCE_STEPS,
    STEP_SIZE_GRID,
};
use msaccel::oracles::{AmsnFoOracle, AmsnOracle, CrOracle, GdOracle, MsOracle};
use msaccel::{Budget, Reference};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::audit::{audit, AuditReport, AuditSpec, CallLog};
use crate::config::{ExperimentConfig, MethodTag, OracleTag};
use crate::error::{HarnessError, Result};
use crate::problem::{ObjectiveSpec, Problem};
use crate::reference::{reference_optimum, Source};
use crate::trace::{write_csv, CSV_SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterTotals {
    pub hess_evals: u64,
    pub lin_solves: u64,
    pub hvps: u64,
    pub grad_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub source: Source,
    pub grad_norm: f64,
    pub f: f64,
}

/// The JSON summary written next to the CSV trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub csv_schema: u32,
    pub config: ExperimentConfig,
    pub dim: usize,
    /// Resolved `M` of the cubic oracle or CR method, when used.
    pub m: Option<f64>,
    /// Resolved Hessian constant of ACR or SONG, when used.
    pub h: Option<f64>,
    /// Step size picked by the grid search, when GD or AGD ran without `--eta`.
    pub tuned_eta: Option<f64>,
    pub reference: ReferenceInfo,
    pub rows: usize,
    pub oracle_calls: usize,
    pub final_f: f64,
    pub final_gap: Option<f64>,
    pub best_gap: Option<f64>,
    pub counters: CounterTotals,
    pub wall_ms: f64,
    pub error: Option<String>,
    pub audit: Option<AuditReport>,
    pub calls: Vec<CallLog>,
}

/// A finished (possibly failed) run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub error: Option<msaccel::Error>,
    pub summary: Summary,
}

impl RunOutput {
    /// `Ok` when the run finished and every requested audit passed.
    pub fn status(&self) -> Result<()> {
        if let Some(e) = &self.error {
            return Err(HarnessError::Run(e.clone()));
        }
        match &self.summary.audit {
            Some(a) if !a.pass => Err(HarnessError::Audit(a.lines().join("; "))),
            _ => Ok(()),
        }
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        write_csv(&mut buf, &self.trace.records).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Writes `path` (CSV) and the summary next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.csv_string())?;
        let json = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        std::fs::write(summary_path(path), json)?;
        Ok(())
    }
}

/// `run.csv` → `run.json`.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

struct Resolved {
    m: Option<f64>,
    h: Option<f64>,
}

fn resolve_constants(cfg: &ExperimentConfig, problem: &Problem) -> Result<Resolved> {
    let needs_m = match cfg.method {
        MethodTag::OptMs | MethodTag::MsBisect => cfg.oracle == OracleTag::Cr,
        MethodTag::Cr => true,
        _ => false,
    };
    let needs_h = matches!(cfg.method, MethodTag::Acr | MethodTag::Song);
    if !needs_m && !needs_h {
        return Ok(Resolved { m: None, h: None });
    }
    let h = match (cfg.h, cfg.m) {
        (Some(h), _) => Some(h),
        (None, Some(m)) => Some(0.5 * m),
        (None, None) => problem.default_h()?,
    };
    let h = h.ok_or_else(|| {
        HarnessError::Config(
            "this objective has no default Hessian constant; pass --H or --M".into(),
        )
    })?;
    let m = cfg.m.unwrap_or(2.0 * h);
    Ok(Resolved {
        m: needs_m.then_some(m),
        h: needs_h.then_some(h),
    })
}

fn oracle(cfg: &ExperimentConfig, m: Option<f64>) -> Box<dyn MsOracle> {
    match cfg.oracle {
        OracleTag::Gd => Box::new(GdOracle {
            eta: cfg.eta.expect("validated"),
        }),
        OracleTag::Cr => Box::new(CrOracle {
            m: m.expect("resolved"),
        }),
        OracleTag::Amsn => Box::new(AmsnOracle {
            sigma: cfg.sigma,
            lazy: cfg.lazy_policy(),
        }),
        OracleTag::AmsnFo => Box::new(AmsnFoOracle {
            sigma: cfg.sigma,
            cap: None,
        }),
    }
}

fn audit_spec(cfg: &ExperimentConfig) -> Option<AuditSpec> {
    let oracle_sigma = match cfg.oracle {
        OracleTag::Amsn | OracleTag::AmsnFo => Some(cfg.sigma),
        OracleTag::Gd | OracleTag::Cr => None,
    };
    match cfg.method {
        MethodTag::OptMs => Some(AuditSpec {
            sigma: oracle_sigma,
            alpha: cfg.alpha,
            potential: true,
            growth: true,
            solve_bound: cfg.oracle == OracleTag::Amsn,
        }),
        MethodTag::MsBisect => Some(AuditSpec {
            sigma: oracle_sigma,
            alpha: cfg.alpha,
            potential: true,
            growth: false,
            solve_bound: cfg.oracle == OracleTag::Amsn,
        }),
        MethodTag::IterateAmsn | MethodTag::IterateAmsnFo => Some(AuditSpec {
            sigma: Some(cfg.sigma),
            alpha: cfg.alpha,
            potential: false,
            growth: false,
            solve_bound: cfg.method == MethodTag::IterateAmsn,
        }),
        _ => None,
    }
}

/// Builds the objective and reference, runs the configured method and,
/// with `cfg.audit`, audits the trace. Configuration problems are returned as
/// errors; failures during the run are kept in [`RunOutput::error`] together
/// with the rows recorded before them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let spec = ObjectiveSpec::parse(&cfg.data, cfg.seed)?;
    let problem = spec.build()?;
    let resolved = resolve_constants(cfg, &problem)?;
    let reference = reference_optimum(&problem, cfg.cache_dir.as_deref())?;
    let f_star = problem
        .objective()
        .value(&reference.x)
        .map_err(HarnessError::Run)?;
    let obj = problem.objective();
    let x0 = Array1::zeros(problem.dim());
    let budget = Budget {
        max_oracle_calls: cfg.budget_calls,
        target_gap: cfg.target_gap,
        max_seconds: cfg.max_seconds,
    };
    let refp = Reference {
        x: reference.x.clone(),
    };
    let start = Instant::now();
    let mut tuned_eta = None;
    let outcome = match cfg.method {
        MethodTag::OptMs => {
            let oc = OptMsConfig {
                alpha: cfg.alpha,
                lambda0: cfg.lambda0,
                damping: cfg.damping.into(),
            };
            optimal_ms_run(
                obj,
                &x0,
                oracle(cfg, resolved.m).as_ref(),
                &oc,
                budget,
                Some(&refp),
            )
        }
        MethodTag::MsBisect => {
            let bc = MsBisectionConfig {
                rho: cfg.rho,
                lambda0: cfg.lambda0,
            };
            ms_bisection_run(
                obj,
                &x0,
                oracle(cfg, resolved.m).as_ref(),
                &bc,
                budget,
                Some(&refp),
            )
        }
        MethodTag::Gd | MethodTag::Agd if cfg.eta.is_none() => {
            let momentum = cfg.method == MethodTag::Agd;
            let t = tune_step_size(obj, &x0, momentum, &STEP_SIZE_GRID, budget, Some(&refp))
                .map_err(HarnessError::Run)?;
            tuned_eta = Some(t.eta);
            Ok(t.trace)
        }
        tag => {
            let method = match tag {
                MethodTag::Cr => Method::Cr {
                    m: resolved.m.expect("resolved"),
                },
                MethodTag::Acr => Method::Acr {
                    h: resolved.h.expect("resolved"),
                },
                MethodTag::Newton => Method::Newton,
                MethodTag::Gd => Method::Gd {
                    eta: cfg.eta.expect("checked"),
                },
                MethodTag::Agd => Method::Agd {
                    eta: cfg.eta.expect("checked"),
                },
                MethodTag::Song => {
                    let r = newton_distance_estimate(obj, &x0, SONG_DISTANCE_STEPS)
                        .map_err(HarnessError::Run)?;
                    Method::Song {
                        h: resolved.h.expect("resolved"),
                        r,
                    }
                }
                MethodTag::IterateAmsn => Method::IterateAmsn {
                    lambda1: cfg.lambda0,
                    sigma: cfg.sigma,
                },
                MethodTag::IterateAmsnFo => Method::IterateAmsnFo {
                    lambda1: cfg.lambda0,
                    sigma: cfg.sigma,
                },
                MethodTag::OptMs | MethodTag::MsBisect => unreachable!(),
            };
            baseline_run(obj, &x0, &method, budget, Some(&refp))
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let (trace, error) = match outcome {
        Ok(t) => (t, None),
        Err(e) => {
            log::error!("run stopped: {}", e.error);
            (e.trace, Some(e.error))
        }
    };
    let calls: Vec<CallLog> = trace.calls.iter().map(CallLog::from).collect();
    let audit_report = match (cfg.audit, audit_spec(cfg)) {
        (true, Some(spec)) if trace.records.len() > 1 => {
            Some(audit(&trace.records, Some(&calls), spec)?)
        }
        _ => None,
    };
    let c = trace.counters;
    let last = trace.records.last();
    let summary = Summary {
        csv_schema: CSV_SCHEMA_VERSION,
        config: cfg.clone(),
        dim: problem.dim(),
        m: resolved.m,
        h: resolved.h,
        tuned_eta,
        reference: ReferenceInfo {
            source: reference.source,
            grad_norm: reference.grad_norm,
            f: f_star,
        },
        rows: trace.records.len(),
        oracle_calls: trace.calls.len(),
        final_f: last.map_or(f64::NAN, |r| r.f),
        final_gap: trace.final_gap(),
        best_gap: trace.best_gap,
        counters: CounterTotals {
            hess_evals: c.hessian_evals,
            lin_solves: c.linear_solves,
            hvps: c.hvps,
            grad_evals: c.gradient_evals,
        },
        wall_ms,
        error: error.as_ref().map(|e| e.to_string()),
        audit: audit_report,
        calls,
    };
    Ok(RunOutput {
        trace,
        error,
        summary,
    })
}
