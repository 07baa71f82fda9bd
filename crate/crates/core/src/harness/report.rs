//! `EVOMAIL-REPORT v1` files and their plain-text tables.
//!
//! Reports hold no wall-clock values, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::HarnessError;
use crate::evolution::IterationRecord;
use crate::records::{self, RecordError};

pub const REPORT_HEADER: &str = "EVOMAIL-REPORT v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportRecord {
    /// The flat configuration the run used.
    Config { text: String },
    Metrics { scenario: String, label: String, metrics: MetricsReport },
    Iteration { scenario: String, label: String, record: IterationRecord },
    Phase {
        label: String,
        phase: String,
        auc: f64,
        f1: f64,
        novel_f1: Option<f64>,
        memory_size: usize,
    },
    Delta { label: String, delta: f64 },
    Note { text: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub records: Vec<ReportRecord>,
}

fn record_err(e: RecordError) -> HarnessError {
    match e {
        RecordError::Io(e) => HarnessError::Io(e.to_string()),
        RecordError::Header { found, .. } if found.starts_with("EVOMAIL-REPORT ") => HarnessError::VersionMismatch { found },
        RecordError::Header { found, .. } => HarnessError::CorruptFile {
            offset: 0,
            reason: format!("bad header {found:?}"),
        },
        RecordError::Line { line, reason } => HarnessError::CorruptFile {
            offset: line,
            reason: format!("line {line}: {reason}"),
        },
    }
}

impl Report {
    pub fn push(&mut self, r: ReportRecord) {
        self.records.push(r);
    }

    pub fn to_record_string(&self) -> String {
        records::to_record_string(REPORT_HEADER, &self.records)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let records = records::parse_records(text.as_bytes(), REPORT_HEADER).map_err(record_err)?;
        Ok(Report { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        records::write_atomic(path, self.to_record_string().as_bytes())
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Human-readable tables: metrics, shift phases, then per-iteration history.
    pub fn render_tables(&self) -> String {
        let mut out = String::new();
        let metrics: Vec<_> = self
            .records
            .iter()
            .filter_map(|r| match r {
                ReportRecord::Metrics { scenario, label, metrics } => Some((scenario, label, metrics)),
                _ => None,
            })
            .collect();
        if !metrics.is_empty() {
            let _ = writeln!(
                out,
                "{:<10} {:<14} {:>8} {:>9} {:>7} {:>7} {:>7}  precision@k",
                "scenario", "label", "accuracy", "precision", "recall", "f1", "auc"
            );
            for (s, l, m) in metrics {
                let pk: Vec<String> = m.precision_at_k.iter().map(|(k, v)| format!("@{k}={v:.3}")).collect();
                let _ = writeln!(
                    out,
                    "{s:<10} {l:<14} {:>8.4} {:>9.4} {:>7.4} {:>7.4} {:>7.4}  {}",
                    m.accuracy,
                    m.precision,
                    m.recall,
                    m.f1,
                    m.auc,
                    pk.join(" ")
                );
            }
            out.push('\n');
        }
        let phases: Vec<_> = self
            .records
            .iter()
            .filter(|r| matches!(r, ReportRecord::Phase { .. } | ReportRecord::Delta { .. }))
            .collect();
        if !phases.is_empty() {
            let _ = writeln!(out, "{:<14} {:<6} {:>7} {:>7} {:>9} {:>7}", "label", "phase", "auc", "f1", "novel_f1", "memory");
            for r in phases {
                match r {
                    ReportRecord::Phase {
                        label,
                        phase,
                        auc,
                        f1,
                        novel_f1,
                        memory_size,
                    } => {
                        let nf = novel_f1.map_or("-".to_string(), |v| format!("{v:.4}"));
                        let _ = writeln!(out, "{label:<14} {phase:<6} {auc:>7.4} {f1:>7.4} {nf:>9} {memory_size:>7}");
                    }
                    ReportRecord::Delta { label, delta } => {
                        let _ = writeln!(out, "{label:<14} delta(auc first - last) = {delta:.4}");
                    }
                    _ => {}
                }
            }
            out.push('\n');
        }
        let iters: Vec<_> = self
            .records
            .iter()
            .filter_map(|r| match r {
                ReportRecord::Iteration { scenario, label, record } => Some((scenario, label, record)),
                _ => None,
            })
            .collect();
        if !iters.is_empty() {
            let _ = writeln!(
                out,
                "{:<10} {:<14} {:>4} {:>10} {:>9} {:>9} {:>7} {:>6} {:>7}",
                "scenario", "label", "iter", "total", "task", "adv", "f1", "memory", "reward"
            );
            for (s, l, r) in iters {
                let _ = writeln!(
                    out,
                    "{s:<10} {l:<14} {:>4} {:>10.3} {:>9.3} {:>9.3} {:>7.4} {:>6} {:>7.4}",
                    r.iteration, r.loss.total, r.loss.task, r.loss.adv, r.f1, r.memory_size, r.mean_reward
                );
            }
            out.push('\n');
        }
        for r in &self.records {
            if let ReportRecord::Note { text } = r {
                let _ = writeln!(out, "note: {text}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip() {
        let mut r = Report::default();
        r.push(ReportRecord::Note { text: "hello".into() });
        r.push(ReportRecord::Delta {
            label: "memory".into(),
            delta: 0.1 + 0.2,
        });
        let back = Report::parse(&r.to_record_string()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn other_version_is_a_mismatch() {
        let err = Report::parse("EVOMAIL-REPORT v0\n").unwrap_err();
        assert!(matches!(err, HarnessError::VersionMismatch { .. }));
        assert!(matches!(Report::parse("garbage\n").unwrap_err(), HarnessError::CorruptFile { .. }));
    }
}
