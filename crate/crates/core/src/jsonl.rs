//! Line-delimited JSON helpers shared by every JSONL artifact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected header kind {expected:?}, found {found:?}")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}: unsupported schema_version {found} (supported: {supported})")]
    SchemaVersion {
        path: String,
        found: u32,
        supported: u32,
    },
}

/// First line of JSONL files that carry a schema version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Header {
    pub fn new(kind: &str) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            kind: kind.to_string(),
            config_hash: None,
        }
    }

    pub fn with_hash(kind: &str, config_hash: &str) -> Self {
        Self {
            config_hash: Some(config_hash.to_string()),
            ..Self::new(kind)
        }
    }
}

/// The header line of a JSONL file, if its first non-blank line is one.
pub fn read_header(path: &Path) -> Result<Option<Header>, JsonlError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        return Ok(serde_json::from_str::<Header>(&line).ok());
    }
    Ok(None)
}

fn io_err(path: &Path, source: std::io::Error) -> JsonlError {
    JsonlError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serialize one record per line. Returns the number of records written.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    header: Option<&Header>,
    records: &[T],
) -> Result<usize, JsonlError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    write_jsonl_to(&mut out, header, records).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))?;
    Ok(records.len())
}

pub fn write_jsonl_to<W: Write, T: Serialize>(
    out: &mut W,
    header: Option<&Header>,
    records: &[T],
) -> std::io::Result<()> {
    if let Some(h) = header {
        writeln!(
            out,
            "{}",
            serde_json::to_string(h).expect("header serializes")
        )?;
    }
    for record in records {
        let line = serde_json::to_string(record).expect("record types serialize infallibly");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Append records to an existing file (creating it if needed).
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    write_jsonl_to(&mut out, None, records).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

/// Read a JSONL file. When `kind` is given the first line must be a
/// [`Header`] of that kind with a supported schema version.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    kind: Option<&str>,
) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let display = path.display().to_string();
    let mut records = Vec::new();
    let mut header_seen = kind.is_none();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let header: Header =
                serde_json::from_str(line).map_err(|source| JsonlError::Parse {
                    path: display.clone(),
                    line: i + 1,
                    source,
                })?;
            let expected = kind.unwrap_or_default();
            if header.kind != expected {
                return Err(JsonlError::Header {
                    path: display,
                    expected: expected.to_string(),
                    found: header.kind,
                });
            }
            if header.schema_version != crate::SCHEMA_VERSION {
                return Err(JsonlError::SchemaVersion {
                    path: display,
                    found: header.schema_version,
                    supported: crate::SCHEMA_VERSION,
                });
            }
            header_seen = true;
            continue;
        }
        let record = serde_json::from_str(line).map_err(|source| JsonlError::Parse {
            path: display.clone(),
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        a: u32,
        b: String,
    }

    #[test]
    fn header_round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let rows = vec![
            Row {
                a: 1,
                b: "x".into(),
            },
            Row {
                a: 2,
                b: "y\nz".into(),
            },
        ];
        assert_eq!(
            write_jsonl(&path, Some(&Header::new("rows")), &rows).unwrap(),
            2
        );
        let back: Vec<Row> = read_jsonl(&path, Some("rows")).unwrap();
        assert_eq!(back, rows);
        let err = read_jsonl::<Row>(&path, Some("other")).unwrap_err();
        assert!(matches!(err, JsonlError::Header { .. }));
    }

    #[test]
    fn header_carries_config_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        write_jsonl(
            &path,
            Some(&Header::with_hash("rows", "abc123")),
            &[Row {
                a: 1,
                b: "x".into(),
            }],
        )
        .unwrap();
        assert_eq!(
            read_header(&path).unwrap().unwrap().config_hash.as_deref(),
            Some("abc123")
        );
        assert_eq!(read_jsonl::<Row>(&path, Some("rows")).unwrap().len(), 1);
        write_jsonl(
            &path,
            None,
            &[Row {
                a: 1,
                b: "x".into(),
            }],
        )
        .unwrap();
        assert_eq!(read_header(&path).unwrap(), None);
    }

    #[test]
    fn empty_file_has_no_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        assert_eq!(write_jsonl::<Row>(&path, None, &[]).unwrap(), 0);
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        assert!(read_jsonl::<Row>(&path, None).unwrap().is_empty());
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"a\":1,\"b\":\"x\"}\nnot json\n").unwrap();
        match read_jsonl::<Row>(&path, None).unwrap_err() {
            JsonlError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }
}
