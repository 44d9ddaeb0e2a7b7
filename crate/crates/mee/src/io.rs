//! Signal sequences and traces as CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mee_core::estimator::EstimationTrace;

use crate::error::{CliError, CliResult};
use crate::json::fmt_f64;

/// Integers print exactly; everything else with 17 significant digits.
pub fn fmt_signal(y: f64) -> String {
    if y.fract() == 0.0 && y.abs() < 9.0e15 {
        format!("{}", y as i64)
    } else {
        fmt_f64(y)
    }
}

/// One signal per line, no header.
pub fn write_signals(path: &Path, signals: &[f64]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &y in signals {
        writeln!(w, "{}", fmt_signal(y)).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a single-column signal file. A leading `y` header is skipped;
/// malformed rows are reported with their line number.
pub fn read_signals(path: &Path) -> CliResult<Vec<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_signals(file, &path.display().to_string())
}

pub fn parse_signals<R: std::io::Read>(reader: R, name: &str) -> CliResult<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.len() != 1 {
            return Err(CliError::Data(format!("{name}: line {line}: expected one value, found {}", rec.len())));
        }
        let field = &rec[0];
        if k == 0 && field == "y" {
            continue;
        }
        let y: f64 = field
            .parse()
            .map_err(|_| CliError::Data(format!("{name}: line {line}: cannot parse `{field}` as a number")))?;
        if !y.is_finite() {
            return Err(CliError::Data(format!("{name}: line {line}: non-finite signal")));
        }
        out.push(y);
    }
    if out.len() < 2 {
        return Err(CliError::Data(format!("{name}: need at least two signals, found {}", out.len())));
    }
    Ok(out)
}

pub fn write_trace(path: &Path, trace: &EstimationTrace, labels: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut header = vec![
        "iteration".to_string(),
        "objective".into(),
        "grad_norm".into(),
        "projected".into(),
        "relative_entropy".into(),
    ];
    header.extend(labels.iter().cloned());
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(err)?;
    for r in &trace.records {
        let mut row = vec![
            r.iteration.to_string(),
            fmt_f64(r.objective),
            fmt_f64(r.grad_norm),
            r.projected.to_string(),
            r.relative_entropy.map(fmt_f64).unwrap_or_default(),
        ];
        row.extend(r.theta.as_slice().iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_reports_line_of_bad_row() {
        let err = parse_signals("1\n2\nthree\n4\n".as_bytes(), "data.csv").unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_signals("1\n2,3\n".as_bytes(), "data.csv").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn header_and_values() {
        assert_eq!(parse_signals("y\n1\n-2.5\n".as_bytes(), "x").unwrap(), vec![1.0, -2.5]);
        assert!(parse_signals("1\n".as_bytes(), "x").is_err());
        assert!(parse_signals("1\nNaN\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn signal_text_round_trips() {
        for y in [0.0, 3.0, -0.1, 1.0 / 3.0, 1e20, -7.25e-9] {
            assert_eq!(fmt_signal(y).parse::<f64>().unwrap(), y);
        }
        assert_eq!(fmt_signal(12.0), "12");
    }
}
