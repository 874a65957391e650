//! CSV trace format.
//!
//! One header line, then one row per outer iteration (row 0 is the start
//! point). Floats are written with 17 significant digits; absent values are
//! empty fields. The column set is versioned by [`CSV_SCHEMA_VERSION`].

use std::io::{Read, Write};

use msaccel::oracles::Counters;
use msaccel::TraceRecord;

use crate::error::{HarnessError, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 15] = [
    "t",
    "f",
    "gap",
    "A",
    "lambda",
    "lambda_prime",
    "up_flag",
    "E",
    "D",
    "N",
    "hess_evals",
    "lin_solves",
    "hvps",
    "grad_evals",
    "wall_ms",
];

/// Index of the wall-clock column, the only non-deterministic one.
pub const WALL_COLUMN: usize = 14;

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn row_fields(r: &TraceRecord) -> [String; 15] {
    let c = r.counters;
    [
        r.t.to_string(),
        fmt_float(r.f),
        opt_float(r.gap),
        opt_float(r.a),
        opt_float(r.lambda),
        opt_float(r.lambda_prime),
        r.up.map(|u| if u { "1" } else { "0" }.to_string())
            .unwrap_or_default(),
        opt_float(r.e),
        opt_float(r.d),
        opt_float(r.n),
        c.hessian_evals.to_string(),
        c.linear_solves.to_string(),
        c.hvps.to_string(),
        c.gradient_evals.to_string(),
        format!("{:.3}", r.wall_ms),
    ]
}

pub fn write_csv<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| HarnessError::Io(e.into());
    w.write_record(COLUMNS).map_err(io)?;
    for r in records {
        w.write_record(row_fields(r)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    line: u64,
    col: usize,
) -> Result<Option<T>> {
    let raw = rec.get(col).unwrap_or("");
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| {
        HarnessError::Parse(format!("line {line}: bad {} value {raw:?}", COLUMNS[col]))
    })
}

fn required<T: std::str::FromStr>(rec: &csv::StringRecord, line: u64, col: usize) -> Result<T> {
    field(rec, line, col)?
        .ok_or_else(|| HarnessError::Parse(format!("line {line}: missing {}", COLUMNS[col])))
}

/// Reads a trace written by [`write_csv`]. The header must match [`COLUMNS`] exactly.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| HarnessError::Parse(e.to_string()))?
        .clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(HarnessError::Parse(format!(
            "trace header {:?} does not match schema v{CSV_SCHEMA_VERSION}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let up = match field::<u8>(&rec, line, 6)? {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(v) => return Err(HarnessError::Parse(format!("line {line}: up_flag {v}"))),
        };
        out.push(TraceRecord {
            t: required(&rec, line, 0)?,
            f: required(&rec, line, 1)?,
            gap: field(&rec, line, 2)?,
            a: field(&rec, line, 3)?,
            lambda: field(&rec, line, 4)?,
            lambda_prime: field(&rec, line, 5)?,
            up,
            e: field(&rec, line, 7)?,
            d: field(&rec, line, 8)?,
            n: field(&rec, line, 9)?,
            counters: Counters {
                hessian_evals: required(&rec, line, 10)?,
                linear_solves: required(&rec, line, 11)?,
                hvps: required(&rec, line, 12)?,
                gradient_evals: required(&rec, line, 13)?,
            },
            wall_ms: required(&rec, line, 14)?,
        });
    }
    Ok(out)
}

/// The CSV text with the wall-clock column blanked, for determinism checks.
pub fn numeric_columns(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| {
            let mut parts: Vec<&str> = l.split(',').collect();
            if parts.len() > WALL_COLUMN {
                parts[WALL_COLUMN] = "";
            }
            parts.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize) -> TraceRecord {
        TraceRecord {
            t,
            f: 0.1,
            gap: Some(1.0 / 3.0),
            a: None,
            lambda: Some(1e-10),
            lambda_prime: None,
            up: Some(t % 2 == 1),
            e: None,
            d: Some(0.0),
            n: None,
            counters: Counters {
                hessian_evals: 1,
                linear_solves: 2,
                hvps: 3,
                gradient_evals: 4,
            },
            wall_ms: 1.5,
        }
    }

    #[test]
    fn round_trip() {
        let recs = vec![record(0), record(1)];
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,f,gap,A,lambda,lambda_prime,up_flag,E,D,N,hess_evals,lin_solves,hvps,grad_evals,wall_ms\n"));
        assert!(text.contains("3.3333333333333331e-1"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn float_format_round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn wrong_header_is_parse_error() {
        let err = read_csv("t,f\n0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, HarnessError::Parse(_)));
    }

    #[test]
    fn numeric_columns_blank_wall_time() {
        let a = "t,f,gap,A,lambda,lambda_prime,up_flag,E,D,N,h,l,v,g,wall_ms\n0,1,,,,,,,,,0,0,0,1,0.123";
        let b = "t,f,gap,A,lambda,lambda_prime,up_flag,E,D,N,h,l,v,g,wall_ms\n0,1,,,,,,,,,0,0,0,1,9.999";
        assert_eq!(numeric_columns(a), numeric_columns(b));
    }
}
