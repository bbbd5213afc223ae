//! Version stamping for everything the harness writes.

use std::path::Path;

use rsc_core::error::Result;
use serde::Serialize;
use serde_json::{json, Value};

pub const VERSION: &str = env!("RSC_VERSION");

/// `{"version", "config"}`, attached to every output.
pub fn provenance<C: Serialize>(config: &C) -> Result<Value> {
    Ok(json!({ "version": VERSION, "config": serde_json::to_value(config)? }))
}

/// Prefixes a CSV body with `# version:` and `# config:` comment lines.
pub fn stamp_csv<C: Serialize>(body: &str, config: &C) -> Result<String> {
    Ok(format!(
        "# version: {VERSION}\n# config: {}\n{body}",
        serde_json::to_string(config)?
    ))
}

/// Writes `fields` merged with the provenance keys as pretty JSON.
pub fn write_json<C: Serialize>(path: &Path, config: &C, fields: Value) -> Result<()> {
    let mut doc = provenance(config)?;
    if let Value::Object(extra) = fields {
        doc.as_object_mut().expect("provenance is an object").extend(extra);
    }
    write_text(path, &serde_json::to_string_pretty(&doc)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes to stdout, ignoring a closed pipe.
pub fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

/// Shortest decimal that rounds the value to ten places, for summary lines.
pub fn short_float(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}
