//! Labelled datasets: LIBSVM text ingestion, row normalization and the
//! two-Gaussian synthetic generator.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// `n` feature rows of dimension `d` with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    /// Rows that were all-zero during the last normalization.
    pub zero_rows: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            zero_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// One parsed LIBSVM line.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExample {
    pub label: f64,
    /// 1-based feature indices, strictly increasing.
    pub pairs: Vec<(usize, f64)>,
}

fn parse_label(token: &str, line: usize) -> Result<f64> {
    match token {
        "+1" | "1" => Ok(1.0),
        "-1" | "0" => Ok(-1.0),
        other => Err(Error::Parse {
            line,
            message: format!("unrecognized label {other:?}"),
        }),
    }
}

fn parse_line(text: &str, line: usize) -> Result<Option<RawExample>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    let mut tokens = text.split_whitespace();
    let label = parse_label(tokens.next().expect("non-empty line"), line)?;
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for tok in tokens {
        let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected index:value, got {tok:?}"),
        })?;
        let idx: usize = idx.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad feature index {idx:?}"),
        })?;
        if idx == 0 {
            return Err(Error::Parse {
                line,
                message: "feature indices are 1-based".into(),
            });
        }
        let val: f64 = val.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad feature value {val:?}"),
        })?;
        if !val.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite feature value {val}"),
            });
        }
        if let Some(&(prev, _)) = pairs.last() {
            if idx <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "index {idx} after {prev}: indices must be strictly increasing"
                    ),
                });
            }
        }
        pairs.push((idx, val));
    }
    Ok(Some(RawExample { label, pairs }))
}

/// Parses LIBSVM text into a dense dataset. The dimension is the largest
/// index seen; missing entries are zero. Blank lines are skipped.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(ex) = parse_line(line, i + 1)? {
            rows.push(ex);
        }
    }
    let d = rows
        .iter()
        .filter_map(|r| r.pairs.last().map(|&(i, _)| i))
        .max()
        .unwrap_or(0);
    let mut features = Array2::zeros((rows.len(), d));
    let mut labels = Array1::zeros(rows.len());
    for (i, ex) in rows.iter().enumerate() {
        labels[i] = ex.label;
        for &(j, v) in &ex.pairs {
            features[[i, j - 1]] = v;
        }
    }
    Dataset::new(features, labels)
}

/// Writes the dense dataset back as LIBSVM text, omitting zero entries.
pub fn to_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for (row, &c) in data.features.rows().into_iter().zip(data.labels.iter()) {
        out.push_str(if c > 0.0 { "+1" } else { "-1" });
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let _ = write!(out, " {}:{:?}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

/// Scales every nonzero row to unit Euclidean norm. Zero rows stay zero and
/// are counted in `zero_rows`.
pub fn normalize_rows(mut data: Dataset) -> Dataset {
    let mut zero_rows = 0;
    for mut row in data.features.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        } else {
            zero_rows += 1;
        }
    }
    if zero_rows > 0 {
        log::warn!("{zero_rows} all-zero feature rows left unnormalized");
    }
    data.zero_rows = zero_rows;
    data
}

fn sphere_point(rng: &mut Rng, d: usize, radius: f64) -> Array1<f64> {
    loop {
        let g = Array1::from_iter((0..d).map(|_| rng.next_normal()));
        let n = g.dot(&g).sqrt();
        if n > 0.0 {
            return g * (radius / n);
        }
    }
}

/// Two-class Gaussian mixture: `n/2` points from `N(μ₁, I)` labelled `+1`
/// followed by `n/2` from `N(μ₂, I)` labelled `−1`, with `μ₁, μ₂` drawn
/// uniformly from the sphere of radius 0.5 (in that order, before any
/// sample). Rows are then unit-normalized.
pub fn synthetic_gaussian(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "n must be positive and even, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidInput("d must be positive".into()));
    }
    let (features, labels, _) = synthetic_raw(n, d, seed);
    Ok(normalize_rows(Dataset::new(features, labels)?))
}

/// Unnormalized samples plus the two class means.
pub(crate) fn synthetic_raw(
    n: usize,
    d: usize,
    seed: u64,
) -> (Array2<f64>, Array1<f64>, [Array1<f64>; 2]) {
    let mut rng = Rng::new(seed);
    let mu1 = sphere_point(&mut rng, d, 0.5);
    let mu2 = sphere_point(&mut rng, d, 0.5);
    let half = n / 2;
    let mut features = Array2::zeros((n, d));
    let mut labels = Array1::zeros(n);
    for i in 0..n {
        let (mu, c) = if i < half { (&mu1, 1.0) } else { (&mu2, -1.0) };
        labels[i] = c;
        for j in 0..d {
            features[[i, j]] = mu[j] + rng.next_normal();
        }
    }
    (features, labels, [mu1, mu2])
}
