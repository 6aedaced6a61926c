//! Report files: a CSV of per-row results and a JSON aggregate, written
//! with deterministic formatting so reruns with the same seed are
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;

/// Schema version stamped into every JSON report.
pub const SPEC_VERSION: &str = "1";

/// Writes `report.csv` under `dir` with the given header and rows.
pub fn write_csv(dir: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = fs::File::create(dir.join("report.csv"))?;
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes `report.json` under `dir`, injecting the schema version and the
/// experiment kind.
pub fn write_json<T: Serialize>(dir: &Path, kind: &str, body: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut value = serde_json::to_value(body)?;
    if let Value::Object(map) = &mut value {
        map.insert("spec_version".into(), json!(SPEC_VERSION));
        map.insert("kind".into(), json!(kind));
    } else {
        value = json!({
            "spec_version": SPEC_VERSION,
            "kind": kind,
            "result": value,
        });
    }
    let text = serde_json::to_string_pretty(&value)?;
    fs::write(dir.join("report.json"), text + "\n")?;
    Ok(())
}

/// Deterministic cell formatting: shortest round-trip representation.
pub fn cell(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}
