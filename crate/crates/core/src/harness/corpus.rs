//! Corpus files and raw mail loading for the command line.

use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::ingest::{parse_email, parse_mbox, EmailDocument, IngestError, RawFormat};
use crate::records::{self, RecordError};

pub const CORPUS_HEADER: &str = "EVOMAIL-CORPUS v1";

fn record_err(e: RecordError) -> HarnessError {
    match e {
        RecordError::Io(e) => HarnessError::Io(e.to_string()),
        RecordError::Header { found, .. } if found.starts_with("EVOMAIL-CORPUS ") => {
            HarnessError::VersionMismatch { found }
        }
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

pub fn write_corpus(path: &Path, docs: &[EmailDocument]) -> Result<(), HarnessError> {
    records::write_records(path, CORPUS_HEADER, docs).map_err(record_err)
}

pub fn read_corpus(path: &Path) -> Result<Vec<EmailDocument>, HarnessError> {
    records::read_records(path, CORPUS_HEADER).map_err(record_err)
}

fn files_under(path: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let rd = std::fs::read_dir(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    for entry in rd {
        let p = entry.map_err(|e| HarnessError::Io(e.to_string()))?.path();
        out.extend(files_under(&p)?);
    }
    out.sort();
    Ok(out)
}

/// Loads corpus files, mbox files and single messages (directories are
/// walked in sorted order). Messages that fail to parse are returned beside
/// the documents rather than aborting the load.
pub fn load_inputs(paths: &[PathBuf]) -> Result<(Vec<EmailDocument>, Vec<(String, IngestError)>), HarnessError> {
    let mut docs = Vec::new();
    let mut failures = Vec::new();
    for root in paths {
        for path in files_under(root)? {
            let bytes = std::fs::read(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            let name = path.display().to_string();
            if bytes.starts_with(CORPUS_HEADER.as_bytes()) {
                docs.extend(read_corpus(&path)?);
            } else if bytes.starts_with(b"From ") {
                for (i, r) in parse_mbox(&bytes).into_iter().enumerate() {
                    match r {
                        Ok(d) => docs.push(d),
                        Err(e) => failures.push((format!("{name}#{i}"), e)),
                    }
                }
            } else {
                match parse_email(&bytes, RawFormat::Eml) {
                    Ok(d) => docs.push(d),
                    Err(e) => failures.push((name, e)),
                }
            }
        }
    }
    Ok((docs, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;

    #[test]
    fn corpus_round_trip_and_mixed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = EmailDocument::blank("a");
        d.subject = "hello".into();
        d.label = Some(Label::Ham);
        let corpus = dir.path().join("c.corpus");
        write_corpus(&corpus, std::slice::from_ref(&d)).unwrap();
        assert_eq!(read_corpus(&corpus).unwrap(), vec![d.clone()]);
        std::fs::write(dir.path().join("m.eml"), b"From: x@y.example\r\nSubject: hi\r\n\r\nbody\r\n").unwrap();
        std::fs::write(
            dir.path().join("box.mbox"),
            b"From a@b Mon Jan  1 00:00:00 2024\nSubject: one\n\nx\n\nFrom a@b Mon Jan  1 00:00:00 2024\nSubject: two\n\ny\n",
        )
        .unwrap();
        let (docs, failures) = load_inputs(&[dir.path().to_path_buf()]).unwrap();
        assert!(failures.is_empty());
        let subjects: Vec<&str> = docs.iter().map(|d| d.subject.as_str()).collect();
        assert_eq!(subjects, ["one", "two", "hello", "hi"]);
    }
}
