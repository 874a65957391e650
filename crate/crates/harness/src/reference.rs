//! Reference optimum for gaps and audits, cached under `MSACCEL_CACHE`.

use std::path::{Path, PathBuf};

use msaccel::baselines::newton_minimize;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::problem::Problem;

pub const CACHE_ENV: &str = "MSACCEL_CACHE";

/// Gradient-norm target of the Newton reference solve.
pub const REFERENCE_GRAD_TOL: f64 = 1e-13;
pub const REFERENCE_MAX_ITER: usize = 200;

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    fingerprint: String,
    grad_norm: f64,
    x: Vec<f64>,
}

/// Where the reference came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Exact,
    Cache,
    Newton,
}

#[derive(Debug, Clone)]
pub struct ReferenceOptimum {
    pub x: Array1<f64>,
    pub grad_norm: f64,
    pub source: Source,
}

fn cache_path(dir: &Path, fingerprint: &str) -> PathBuf {
    dir.join(format!("{fingerprint}.json"))
}

fn load(path: &Path, fingerprint: &str, dim: usize) -> Option<CacheEntry> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str::<CacheEntry>(&text) {
        Ok(e) if e.fingerprint == fingerprint && e.x.len() == dim => Some(e),
        Ok(_) => {
            log::warn!("ignoring mismatched cache entry {}", path.display());
            None
        }
        Err(err) => {
            log::warn!("ignoring unreadable cache entry {}: {err}", path.display());
            None
        }
    }
}

/// Closed-form minimizer when known, otherwise damped Newton from the origin
/// to `‖∇f‖ ≤ 1e-13`. With a cache directory the Newton result is stored in
/// `<dir>/<sha256>.json` and reused.
pub fn reference_optimum(problem: &Problem, cache_dir: Option<&Path>) -> Result<ReferenceOptimum> {
    if let Some(x) = problem.exact_minimizer() {
        return Ok(ReferenceOptimum {
            x,
            grad_norm: 0.0,
            source: Source::Exact,
        });
    }
    let fingerprint = problem.fingerprint();
    let dim = problem.dim();
    if let Some(dir) = cache_dir {
        if let Some(e) = load(&cache_path(dir, &fingerprint), &fingerprint, dim) {
            return Ok(ReferenceOptimum {
                x: Array1::from_vec(e.x),
                grad_norm: e.grad_norm,
                source: Source::Cache,
            });
        }
    }
    let sol = newton_minimize(
        problem.objective(),
        &Array1::zeros(dim),
        REFERENCE_GRAD_TOL,
        REFERENCE_MAX_ITER,
    )
    .map_err(HarnessError::Run)?;
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir)?;
        let entry = CacheEntry {
            fingerprint: fingerprint.clone(),
            grad_norm: sol.grad_norm,
            x: sol.x.to_vec(),
        };
        let path = cache_path(dir, &fingerprint);
        let tmp = path.with_extension(format!("json.{}.tmp", std::process::id()));
        std::fs::write(
            &tmp,
            serde_json::to_string(&entry).expect("plain data serializes"),
        )?;
        std::fs::rename(&tmp, &path)?;
    }
    Ok(ReferenceOptimum {
        x: sol.x,
        grad_norm: sol.grad_norm,
        source: Source::Newton,
    })
}

/// Cache directory from the environment, if set and non-empty.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}
