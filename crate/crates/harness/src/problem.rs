//! Objective specs (`--data`) and the problems they build.

use std::path::PathBuf;

use msaccel::data::{normalize_rows, parse_libsvm, synthetic_gaussian, Dataset};
use msaccel::objectives::{
    hessian_lipschitz_bound, make_logistic, make_quadratic, make_worst_case, CubicChain, Logistic,
    Quadratic,
};
use msaccel::Objective;
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Hessian constant used for the cubic chain when none is given.
pub const CHAIN_DEFAULT_H: f64 = 10.0;

/// Fraction of the bound H̄ used as the logistic Hessian constant.
pub const LOGISTIC_H_FRACTION: f64 = 0.1;

/// Parsed `--data` value.
///
/// * `synthetic:n=500,d=200[,seed=1]`
/// * `worst:d=300`
/// * `quadratic:diag=1:2:3[,b=1:0:0]`
/// * `libsvm:PATH` or a bare path
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Libsvm(PathBuf),
    Synthetic { n: usize, d: usize, seed: u64 },
    Worst { d: usize },
    Quadratic { diag: Vec<f64>, b: Vec<f64> },
}

fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn key_values(body: &str) -> Result<Vec<(&str, &str)>> {
    body.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| config(format!("expected key=value, got {p:?}")))
        })
        .collect()
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config(format!("bad value {v:?} for {key}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(':').map(|x| number(key, x)).collect()
}

impl ObjectiveSpec {
    /// Parses a spec; `seed` fills in a missing synthetic seed.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let Some((kind, body)) = text.split_once(':') else {
            return Ok(ObjectiveSpec::Libsvm(PathBuf::from(text)));
        };
        match kind {
            "libsvm" => Ok(ObjectiveSpec::Libsvm(PathBuf::from(body))),
            "synthetic" => {
                let (mut n, mut d, mut s) = (None, None, seed);
                for (k, v) in key_values(body)? {
                    match k {
                        "n" => n = Some(number(k, v)?),
                        "d" => d = Some(number(k, v)?),
                        "seed" => s = number(k, v)?,
                        _ => return Err(config(format!("unknown synthetic key {k:?}"))),
                    }
                }
                Ok(ObjectiveSpec::Synthetic {
                    n: n.ok_or_else(|| config("synthetic spec needs n"))?,
                    d: d.ok_or_else(|| config("synthetic spec needs d"))?,
                    seed: s,
                })
            }
            "worst" => {
                let mut d = None;
                for (k, v) in key_values(body)? {
                    match k {
                        "d" => d = Some(number(k, v)?),
                        _ => return Err(config(format!("unknown worst-case key {k:?}"))),
                    }
                }
                Ok(ObjectiveSpec::Worst {
                    d: d.ok_or_else(|| config("worst-case spec needs d"))?,
                })
            }
            "quadratic" => {
                let (mut diag, mut b) = (None, None);
                for (k, v) in key_values(body)? {
                    match k {
                        "diag" => diag = Some(list(k, v)?),
                        "b" => b = Some(list(k, v)?),
                        _ => return Err(config(format!("unknown quadratic key {k:?}"))),
                    }
                }
                let diag = diag.ok_or_else(|| config("quadratic spec needs diag"))?;
                let b = b.unwrap_or_else(|| vec![0.0; diag.len()]);
                if b.len() != diag.len() {
                    return Err(config(format!(
                        "b has {} entries, diag has {}",
                        b.len(),
                        diag.len()
                    )));
                }
                Ok(ObjectiveSpec::Quadratic { diag, b })
            }
            // Windows drive letters and other paths containing ':'
            _ => Ok(ObjectiveSpec::Libsvm(PathBuf::from(text))),
        }
    }

    pub fn build(&self) -> Result<Problem> {
        match self {
            ObjectiveSpec::Libsvm(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
                let data = normalize_rows(parse_libsvm(&text).map_err(HarnessError::setup)?);
                Problem::logistic(data)
            }
            ObjectiveSpec::Synthetic { n, d, seed } => {
                Problem::logistic(synthetic_gaussian(*n, *d, *seed).map_err(HarnessError::setup)?)
            }
            ObjectiveSpec::Worst { d } => Ok(Problem::Chain(
                make_worst_case(*d).map_err(HarnessError::setup)?,
            )),
            ObjectiveSpec::Quadratic { diag, b } => {
                let q = Array2::from_diag(&Array1::from_vec(diag.clone()));
                let f =
                    make_quadratic(q, Array1::from_vec(b.clone())).map_err(HarnessError::setup)?;
                Ok(Problem::Quadratic(f))
            }
        }
    }
}

/// A built objective plus what the runner needs to know about it.
#[derive(Debug, Clone)]
pub enum Problem {
    Logistic { f: Logistic, data: Dataset },
    Chain(CubicChain),
    Quadratic(Quadratic),
}

impl Problem {
    fn logistic(data: Dataset) -> Result<Self> {
        let f = make_logistic(&data).map_err(HarnessError::setup)?;
        Ok(Problem::Logistic { f, data })
    }

    pub fn objective(&self) -> &dyn Objective {
        match self {
            Problem::Logistic { f, .. } => f,
            Problem::Chain(f) => f,
            Problem::Quadratic(f) => f,
        }
    }

    pub fn dim(&self) -> usize {
        self.objective().dim()
    }

    /// Default Hessian-Lipschitz estimate `H`, if the problem has one.
    pub fn default_h(&self) -> Result<Option<f64>> {
        Ok(match self {
            Problem::Logistic { data, .. } => Some(
                LOGISTIC_H_FRACTION * hessian_lipschitz_bound(data).map_err(HarnessError::setup)?,
            ),
            Problem::Chain(_) => Some(CHAIN_DEFAULT_H),
            Problem::Quadratic(_) => None,
        })
    }

    /// Known minimizer, when available in closed form.
    pub fn exact_minimizer(&self) -> Option<Array1<f64>> {
        match self {
            Problem::Chain(f) => Some(f.minimizer()),
            Problem::Quadratic(q) => {
                let diag = q.matrix().diag();
                if diag.iter().all(|&v| v > 0.0) {
                    Some(q.linear_term() / &diag)
                } else {
                    None
                }
            }
            Problem::Logistic { .. } => None,
        }
    }

    /// SHA-256 over the problem kind and its defining numbers.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut floats = |tag: &[u8], xs: &mut dyn Iterator<Item = f64>| {
            h.update(tag);
            for x in xs {
                h.update(x.to_le_bytes());
            }
        };
        match self {
            Problem::Logistic { data, .. } => {
                let (n, d) = data.features.dim();
                floats(
                    format!("logistic {n} {d}").as_bytes(),
                    &mut data.features.iter().copied(),
                );
                floats(b"labels", &mut data.labels.iter().copied());
            }
            Problem::Chain(f) => floats(
                format!("chain {}", f.dim()).as_bytes(),
                &mut std::iter::empty(),
            ),
            Problem::Quadratic(q) => {
                floats(
                    format!("quadratic {}", q.dim()).as_bytes(),
                    &mut q.matrix().iter().copied(),
                );
                floats(b"b", &mut q.linear_term().iter().copied());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!(
            ObjectiveSpec::parse("synthetic:n=10,d=3", 7).unwrap(),
            ObjectiveSpec::Synthetic {
                n: 10,
                d: 3,
                seed: 7
            }
        );
        assert_eq!(
            ObjectiveSpec::parse("synthetic:n=10,d=3,seed=2", 7).unwrap(),
            ObjectiveSpec::Synthetic {
                n: 10,
                d: 3,
                seed: 2
            }
        );
        assert_eq!(
            ObjectiveSpec::parse("worst:d=5", 0).unwrap(),
            ObjectiveSpec::Worst { d: 5 }
        );
        assert_eq!(
            ObjectiveSpec::parse("quadratic:diag=1:2,b=3:4", 0).unwrap(),
            ObjectiveSpec::Quadratic {
                diag: vec![1.0, 2.0],
                b: vec![3.0, 4.0]
            }
        );
        assert_eq!(
            ObjectiveSpec::parse("data/a9a.txt", 0).unwrap(),
            ObjectiveSpec::Libsvm(PathBuf::from("data/a9a.txt"))
        );
        assert!(ObjectiveSpec::parse("synthetic:n=10", 0).is_err());
        assert!(ObjectiveSpec::parse("worst:d=x", 0).is_err());
        assert!(ObjectiveSpec::parse("quadratic:diag=1:2,b=1", 0).is_err());
    }

    #[test]
    fn fingerprints_differ_by_content() {
        let a = ObjectiveSpec::parse("synthetic:n=10,d=3,seed=1", 0)
            .unwrap()
            .build()
            .unwrap();
        let b = ObjectiveSpec::parse("synthetic:n=10,d=3,seed=2", 0)
            .unwrap()
            .build()
            .unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn quadratic_minimizer() {
        let p = ObjectiveSpec::parse("quadratic:diag=2:4,b=1:1", 0)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(p.exact_minimizer().unwrap().to_vec(), vec![0.5, 0.25]);
    }
}
