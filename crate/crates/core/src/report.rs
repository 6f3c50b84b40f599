//! JSON report envelopes and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;

pub const SCHEMA_VERSION: &str = "1.0";

/// Name of the only field that differs between identical runs.
pub const TIMESTAMP_FIELD: &str = "timestamp";

/// Wraps a report as `{schema_version, kind, timestamp, report}`.
pub fn envelope<T: Serialize>(kind: &str, report: &T) -> Result<Value> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        TIMESTAMP_FIELD: timestamp,
        "report": serde_json::to_value(report)?,
    }))
}

/// Copy of an envelope without its timestamp, for run-to-run comparison.
pub fn strip_timestamp(mut v: Value) -> Value {
    if let Some(obj) = v.as_object_mut() {
        obj.remove(TIMESTAMP_FIELD);
    }
    v
}

/// Writes `bytes` to a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes the enveloped report to `dir/name.json` and returns the path.
pub fn write_report<T: Serialize>(dir: &Path, name: &str, kind: &str, report: &T) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.json"));
    let mut bytes = serde_json::to_vec_pretty(&envelope(kind, report)?)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok(path)
}
