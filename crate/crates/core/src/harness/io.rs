//! Dataset ingestion and result serialization.

use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::{ExperimentSpec, ResultRow};

const LABEL_COLUMN: &str = "is_inlier";

fn parse_label(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "True" | "TRUE" => Some(true),
        "0" | "false" | "False" | "FALSE" => Some(false),
        _ => None,
    }
}

/// Reads a numeric CSV table. A header row is optional; a trailing
/// `is_inlier` column (named in the header) becomes the dataset labels.
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_csv(f)
}

pub fn read_csv(input: impl Read) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    let mut has_labels = false;
    let mut width: Option<usize> = None;
    let mut first = true;

    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if first {
            first = false;
            if rec.iter().any(|c| c.parse::<f64>().is_err()) {
                has_labels = rec.iter().next_back() == Some(LABEL_COLUMN);
                width = Some(rec.len());
                continue;
            }
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                line,
                message: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        let values = if has_labels { w - 1 } else { w };
        let mut row = Vec::with_capacity(values);
        for (j, cell) in rec.iter().take(values).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {j}: non-numeric value {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {j}: non-finite value {cell:?}"),
                });
            }
            row.push(v);
        }
        if has_labels {
            let cell = &rec[w - 1];
            labels.push(parse_label(cell).ok_or_else(|| Error::Parse {
                line,
                message: format!("{LABEL_COLUMN}: expected 0/1 or true/false, got {cell:?}"),
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    if rows[0].is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no value columns".into(),
        });
    }
    let data = Dataset::from_rows(&rows)?;
    if has_labels {
        data.with_labels(labels)
    } else {
        Ok(data)
    }
}

pub const RESULT_HEADER: &str = "method,alpha,d,n,trial,recovery_error,outer_iterations,wall_time_ms";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_results_csv(rows: &[ResultRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{RESULT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.alpha,
            r.d,
            r.n,
            r.trial,
            opt(r.recovery_error),
            opt(r.outer_iterations),
            opt(r.wall_time_ms)
        )?;
    }
    Ok(())
}

pub fn write_results_json(spec: &ExperimentSpec, rows: &[ResultRow], mut out: impl Write) -> Result<()> {
    let doc = serde_json::json!({ "spec": spec, "rows": rows });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headerless_table() {
        let d = read_csv("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(d.n(), 2);
        assert!(d.labels().is_none());
    }

    #[test]
    fn labels_and_bools() {
        let d = read_csv("x0,is_inlier\n1.5,true\n2,0\n".as_bytes()).unwrap();
        assert_eq!(d.labels(), Some(&[true, false][..]));
    }

    #[test]
    fn ragged_row_reports_line() {
        let e = read_csv("x0,x1\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn non_numeric_reports_line() {
        let e = read_csv("x0,x1\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }
}
