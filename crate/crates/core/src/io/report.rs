//! JSON report envelopes with stable key order and a config hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "fnls";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub provenance: String,
    pub payload: Value,
}

impl ReportEnvelope {
    pub fn new(config_hash: &str, payload: impl Serialize) -> Result<Self> {
        let payload = serde_json::to_value(payload)?;
        ensure_finite(&payload, "payload")?;
        Ok(ReportEnvelope {
            tool: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            provenance: format!("{}/{} config:{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"), &config_hash[..config_hash.len().min(12)]),
            payload,
        })
    }
}

/// Rejects `null` anywhere in a report. Optional fields are skipped when
/// absent, so a `null` can only come from a NaN or infinity.
pub fn ensure_finite(v: &Value, path: &str) -> Result<()> {
    match v {
        Value::Null => Err(Error::NonFinite(format!("report entry `{path}` is not a finite number"))),
        Value::Array(items) => items.iter().enumerate().try_for_each(|(i, x)| ensure_finite(x, &format!("{path}[{i}]"))),
        Value::Object(map) => map.iter().try_for_each(|(k, x)| ensure_finite(x, &format!("{path}.{k}"))),
        Value::Number(n) => {
            if n.as_f64().is_some_and(f64::is_finite) {
                Ok(())
            } else {
                Err(Error::NonFinite(format!("report entry `{path}` is not finite")))
            }
        }
        _ => Ok(()),
    }
}

/// Pretty JSON with keys in sorted order (serde_json maps are ordered).
pub fn canonical_json(value: &impl Serialize) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

/// SHA-256 of the compact canonical JSON; independent of key order.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let v = serde_json::to_value(config)?;
    let text = serde_json::to_string(&v)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_report(path: impl AsRef<Path>, envelope: &ReportEnvelope) -> Result<()> {
    let mut text = canonical_json(envelope)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Wall time goes to a sibling file so reports stay byte-identical across runs.
pub fn write_timing(report_path: impl AsRef<Path>, seconds: f64) -> Result<PathBuf> {
    let p = report_path.as_ref();
    let mut name = p.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".timing.json");
    let path = p.with_file_name(name);
    fs::write(&path, format!("{{\n  \"wall_time_s\": {seconds}\n}}\n"))?;
    Ok(path)
}
