//! Report serialization: sweep CSV/JSON, the CSV reader used for
//! round-trip checks and pretty-printing, and trace dumps.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::attack::sweep::{Scenario, SweepReport, SweepRow};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report {path} line {line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub const SWEEP_CSV_HEADER: &str = "event_name,category,scenario,trigger_count,vulnerable";

/// Render sweep rows as CSV. Fields contain no commas by construction
/// (event names and categories come from identifier-like vocabularies).
pub fn sweep_to_csv(report: &SweepReport) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.event,
            row.category,
            row.scenario.as_str(),
            row.trigger_count,
            row.vulnerable
        ));
    }
    out
}

pub fn write_sweep_csv(report: &SweepReport, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(sweep_to_csv(report).as_bytes())
        .map_err(|e| io_err(path, e))
}

pub fn write_sweep_json(report: &SweepReport, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(report).expect("serializable report");
    std::fs::write(path, json).map_err(|e| io_err(path, e))
}

/// Read sweep rows back from CSV. Lossless over `sweep_to_csv` output.
pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>, ReportError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SWEEP_CSV_HEADER => {}
        Some((_, other)) => {
            return Err(ReportError::Malformed {
                path: path.display().to_string(),
                line: 1,
                msg: format!("unexpected header {other:?}"),
            })
        }
        None => {
            return Err(ReportError::Malformed {
                path: path.display().to_string(),
                line: 1,
                msg: "empty file".to_string(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(ReportError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let scenario = match fields[2] {
            "s1" => Scenario::S1,
            "s2" => Scenario::S2,
            other => {
                return Err(ReportError::Malformed {
                    path: path.display().to_string(),
                    line: idx + 1,
                    msg: format!("bad scenario {other:?}"),
                })
            }
        };
        let trigger_count = fields[3].parse().map_err(|_| ReportError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            msg: format!("bad trigger_count {:?}", fields[3]),
        })?;
        let vulnerable = match fields[4] {
            "true" => true,
            "false" => false,
            other => {
                return Err(ReportError::Malformed {
                    path: path.display().to_string(),
                    line: idx + 1,
                    msg: format!("bad vulnerable flag {other:?}"),
                })
            }
        };
        rows.push(SweepRow {
            event: fields[0].to_string(),
            category: fields[1].to_string(),
            scenario,
            trigger_count,
            vulnerable,
        });
    }
    Ok(rows)
}

/// Fixed-width table for terminal pretty-printing of saved reports.
pub fn format_rows_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let name_w = rows.iter().map(|r| r.event.len()).max().unwrap_or(0).max(5);
    let cat_w = rows.iter().map(|r| r.category.len()).max().unwrap_or(0).max(8);
    out.push_str(&format!(
        "{:<name_w$}  {:<cat_w$}  {:<8}  {:>13}  {}\n",
        "event", "category", "scenario", "trigger_count", "vulnerable"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<name_w$}  {:<cat_w$}  {:<8}  {:>13}  {}\n",
            r.event,
            r.category,
            r.scenario.as_str(),
            r.trigger_count,
            r.vulnerable
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> SweepReport {
        SweepReport {
            rows: vec![
                SweepRow {
                    event: "A.ONE".into(),
                    category: "A".into(),
                    scenario: Scenario::S1,
                    trigger_count: 3,
                    vulnerable: true,
                },
                SweepRow {
                    event: "A.ONE".into(),
                    category: "A".into(),
                    scenario: Scenario::S2,
                    trigger_count: 0,
                    vulnerable: false,
                },
            ],
            vulnerable_events: vec!["A.ONE".into()],
            cells_tested: 2,
            gadget_executions: 20,
            cells: None,
        }
    }

    #[test]
    fn csv_roundtrip_lossless() {
        let report = sample_report();
        let dir = std::env::temp_dir().join("pmuspill-report-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{}-roundtrip.csv", std::process::id()));
        write_sweep_csv(&report, &path).unwrap();
        let rows = read_sweep_csv(&path).unwrap();
        assert_eq!(rows, report.rows);
    }

    #[test]
    fn malformed_header_rejected() {
        let dir = std::env::temp_dir().join("pmuspill-report-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{}-bad.csv", std::process::id()));
        std::fs::write(&path, "nope\n").unwrap();
        assert!(matches!(
            read_sweep_csv(&path),
            Err(ReportError::Malformed { line: 1, .. })
        ));
    }
}
