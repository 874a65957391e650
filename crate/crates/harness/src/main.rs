use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msaccel::accel::{DEFAULT_ALPHA, DEFAULT_LAMBDA0, DEFAULT_RHO};
use msaccel::oracles::DEFAULT_SIGMA;
use msaccel_harness::config::{DampingFlag, ExperimentConfig, LazyFlag, MethodTag, OracleTag};
use msaccel_harness::error::{EXIT_CONFIG, EXIT_OK};
use msaccel_harness::reference::cache_dir_from_env;
use msaccel_harness::{audit_trace, run_experiment, HarnessError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "msaccel",
    version,
    about = "Run and audit Monteiro-Svaiter accelerated methods"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Re-check the invariants of a CSV trace.
    AuditTrace(AuditArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum)]
    method: Option<MethodTag>,
    #[arg(long, value_enum, default_value = "AMSN")]
    oracle: OracleTag,
    /// LIBSVM path, `synthetic:n=..,d=..[,seed=..]`, `worst:d=..` or `quadratic:diag=a:b:..[,b=..]`.
    #[arg(long)]
    data: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA0)]
    lambda0: f64,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "M")]
    m: Option<f64>,
    #[arg(long = "H")]
    h: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    #[arg(long, value_enum, default_value = "on")]
    damping: DampingFlag,
    #[arg(long, value_enum)]
    lazy: Option<LazyFlag>,
    #[arg(long, default_value_t = 100)]
    budget_calls: usize,
    #[arg(long)]
    target_gap: Option<f64>,
    #[arg(long)]
    max_seconds: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV trace path; the JSON summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    audit: bool,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Summary JSON; defaults to the trace path with a `.json` extension, if present.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    /// Defaults to the run's sigma from the summary, then to the worst observed ratio.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

fn run(args: RunArgs) -> Result<()> {
    let method = args
        .method
        .ok_or_else(|| HarnessError::Config("--method is required".into()))?;
    let data = args
        .data
        .ok_or_else(|| HarnessError::Config("--data is required".into()))?;
    let cfg = ExperimentConfig {
        oracle: args.oracle,
        alpha: args.alpha,
        sigma: args.sigma,
        lambda0: args.lambda0,
        eta: args.eta,
        m: args.m,
        h: args.h,
        rho: args.rho,
        damping: args.damping,
        lazy: args.lazy,
        budget_calls: args.budget_calls,
        target_gap: args.target_gap,
        max_seconds: args.max_seconds,
        seed: args.seed,
        out: args.out.clone(),
        audit: args.audit,
        cache_dir: cache_dir_from_env(),
        ..ExperimentConfig::new(method, data)
    };
    let output = run_experiment(&cfg)?;
    match &args.out {
        Some(path) => output.write(path)?,
        None => print!("{}", output.csv_string()),
    }
    if let Some(report) = &output.summary.audit {
        for line in report.lines() {
            eprintln!("{line}");
        }
    }
    let s = &output.summary;
    log::info!(
        "{} rows, {} oracle calls, final gap {:?}",
        s.rows,
        s.oracle_calls,
        s.final_gap
    );
    output.status()
}

fn audit_cmd(args: AuditArgs) -> Result<()> {
    let summary = args.summary.or_else(|| {
        let p = msaccel_harness::run::summary_path(&args.trace);
        p.exists().then_some(p)
    });
    let sigma = match (args.sigma, &summary) {
        (Some(s), _) => Some(s),
        (None, Some(p)) => run_sigma(p)?,
        (None, None) => None,
    };
    let report = audit_trace(
        &args.trace,
        summary.as_deref(),
        args.data.as_deref(),
        sigma,
        args.alpha,
    )?;
    for line in report.lines() {
        println!("{line}");
    }
    if report.pass {
        Ok(())
    } else {
        Err(HarnessError::Audit(format!(
            "{} failed",
            args.trace.display()
        )))
    }
}

/// The sigma a run was configured with, when its oracle guarantees it.
fn run_sigma(summary: &std::path::Path) -> Result<Option<f64>> {
    let text = std::fs::read_to_string(summary)?;
    let s: msaccel_harness::Summary = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Parse(format!("{}: {e}", summary.display())))?;
    Ok(match s.config.oracle {
        OracleTag::Amsn | OracleTag::AmsnFo => Some(s.config.sigma),
        OracleTag::Gd | OracleTag::Cr => None,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_CONFIG as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    let result = match cli.command {
        Some(Command::AuditTrace(a)) => audit_cmd(a),
        None => run(cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
