//! Versioned newline-delimited record files: one header line, then one JSON
//! value per line. Writes go to a temporary sibling and are renamed into place.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug)]
pub(crate) enum RecordError {
    Io(std::io::Error),
    Header { expected: String, found: String },
    Line { line: usize, reason: String },
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordError::Io(e) => write!(f, "io error: {e}"),
            RecordError::Header { expected, found } => {
                write!(f, "expected header {expected:?}, found {found:?}")
            }
            RecordError::Line { line, reason } => write!(f, "line {line}: {reason}"),
        }
    }
}

impl From<std::io::Error> for RecordError {
    fn from(e: std::io::Error) -> Self {
        RecordError::Io(e)
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn tmp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub(crate) fn write_records<T: Serialize>(
    path: &Path,
    header: &str,
    items: impl IntoIterator<Item = T>,
) -> Result<(), RecordError> {
    let tmp = tmp_path(path);
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
        writeln!(w, "{header}")?;
        for item in items {
            serde_json::to_writer(&mut w, &item).map_err(|e| RecordError::Line {
                line: 0,
                reason: e.to_string(),
            })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn to_record_string<T: Serialize>(header: &str, items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record values serialize"));
        out.push('\n');
    }
    out
}

pub(crate) fn read_records<T: DeserializeOwned>(path: &Path, header: &str) -> Result<Vec<T>, RecordError> {
    let f = std::fs::File::open(path)?;
    parse_records(BufReader::new(f), header)
}

pub(crate) fn parse_records<T: DeserializeOwned>(reader: impl BufRead, header: &str) -> Result<Vec<T>, RecordError> {
    let mut lines = reader.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim_end() != header {
        return Err(RecordError::Header {
            expected: header.to_string(),
            found: first,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| RecordError::Line {
            line: i + 2,
            reason: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}
