//! File formats: `time,event` input CSV, space-separated `x y` plot data and
//! the comparison results table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::ComparisonRow;
use crate::survival::{Observation, SurvivalSample};

/// Reads a `time,event` CSV with header. `event` must be `0` or `1`.
///
/// Times must be finite and, unless `allow_negative`, strictly positive.
pub fn ingest_csv(path: &Path, allow_negative: bool) -> Result<SurvivalSample> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string(), allow_negative)
}

/// [`ingest_csv`] on in-memory text; `origin` names the source in errors.
pub fn parse_csv(text: &str, origin: &str, allow_negative: bool) -> Result<SurvivalSample> {
    let parse_err = |line: u64, column: u64, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, 1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "event" {
        return Err(parse_err(
            1,
            1,
            format!("expected header `time,event`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, 1, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let time: f64 = row[0]
            .parse()
            .map_err(|_| parse_err(line, 1, format!("time `{}` is not a number", &row[0])))?;
        if !time.is_finite() {
            return Err(parse_err(line, 1, format!("time `{}` is not finite", &row[0])));
        }
        if !allow_negative && time <= 0.0 {
            return Err(parse_err(
                line,
                1,
                format!("time {time} must be positive (use --allow-negative for location families)"),
            ));
        }
        let event = match &row[1] {
            "1" => true,
            "0" => false,
            other => {
                return Err(parse_err(
                    line,
                    2,
                    format!("event `{other}` must be 0 or 1"),
                ))
            }
        };
        records.push(Observation::new(time, event));
    }
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{origin}: no data rows")));
    }
    SurvivalSample::with_any_finite_times(records)
}

/// Two-column plot data with header `x y`.
#[derive(Debug, Clone, PartialEq)]
pub struct XyTable {
    rows: Vec<(f64, f64)>,
}

impl XyTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("XY table has no rows".into()));
        }
        if rows.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidInput("XY table values must be finite".into()));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// `x y` header then one `%.6g %.6g` row per line, LF endings.
    pub fn render(&self) -> String {
        let mut out = String::from("x y\n");
        for &(x, y) in &self.rows {
            let _ = writeln!(out, "{} {}", format_g6(x), format_g6(y));
        }
        out
    }
}

pub fn emit_xy(table: &XyTable, path: &Path) -> Result<()> {
    fs::write(path, table.render())?;
    Ok(())
}

pub fn read_xy(path: &Path) -> Result<XyTable> {
    let text = fs::read_to_string(path)?;
    parse_xy(&text, &path.display().to_string())
}

pub fn parse_xy(text: &str, origin: &str) -> Result<XyTable> {
    let err = |line: usize, column: u64, message: String| Error::Parse {
        path: origin.to_string(),
        line: line as u64,
        column,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split_whitespace().eq(["x", "y"]) => {}
        _ => return Err(err(1, 1, "expected header `x y`".into())),
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(i + 1, 1, format!("expected 2 columns, found {}", fields.len())));
        }
        let parse = |col: usize| -> Result<f64> {
            fields[col]
                .parse()
                .map_err(|_| err(i + 1, col as u64 + 1, format!("`{}` is not a number", fields[col])))
        };
        rows.push((parse(0)?, parse(1)?));
    }
    XyTable::new(rows)
}

/// C `printf("%.6g")`.
pub fn format_g6(x: f64) -> String {
    const PRECISION: i32 = 6;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Exponent after rounding to six significant digits.
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= PRECISION {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Header of the results table.
pub const RESULTS_HEADER: &str = "scenario,n,censoring,method,bias,variance,mse";

/// One results line, four decimals.
pub fn results_line(scenario: &str, row: &ComparisonRow) -> String {
    format!(
        "{scenario},{},{:.4},{},{:.4},{:.4},{:.4}",
        row.n,
        row.censoring,
        row.method.label(),
        row.bias,
        row.variance,
        row.mse
    )
}
