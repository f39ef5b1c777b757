use std::io::Write;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance written into every output: enough to rerun the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved inputs, including the scenario when there is one.
    pub params: Value,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, params: Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            params,
            version: VERSION.into(),
            seed,
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }
}

#[derive(Serialize)]
struct Document<'a, T> {
    manifest: &'a RunManifest,
    result: &'a T,
}

pub fn write_json<W: Write, T: Serialize>(out: &mut W, manifest: &RunManifest, result: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, &Document { manifest, result })?;
    writeln!(out)
}

/// CSV preceded by a `# manifest: {...}` comment line.
pub fn write_csv<W: Write, R: Serialize>(out: &mut W, manifest: &RunManifest, rows: &[R]) -> std::io::Result<()> {
    writeln!(out, "# manifest: {}", manifest.json_line())?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}
