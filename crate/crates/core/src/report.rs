//! Machine-readable run reports.
//!
//! Every command emits a JSON manifest wrapping its result together with
//! enough context to reproduce it: schema version, tool version, and a
//! fingerprint of the configuration file that drove the run. Manifests
//! are deliberately timestamp-free so identical runs produce identical
//! bytes.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Bumped whenever the manifest layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

/// Envelope around a command result.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<T: Serialize> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the configuration file bytes, when one was loaded.
    pub config_sha256: Option<String>,
    pub result: T,
}

impl<T: Serialize> Manifest<T> {
    pub fn new(command: &'static str, config_bytes: Option<&[u8]>, result: T) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            tool: "rydense",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: config_bytes.map(sha256_hex),
            result,
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::numerical(format!("report serialization failed: {e}")))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut json = self.to_json_pretty()?;
        json.push('\n');
        std::fs::write(path, json)
            .map_err(|e| Error::io(format!("writing report {}", path.display()), e))
    }
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[derive(Serialize)]
    struct Payload {
        value: f64,
    }

    #[test]
    fn manifest_is_deterministic_and_complete() {
        let make = || Manifest::new("fit", Some(b"[sweep]\n"), Payload { value: 1.5 });
        let a = make().to_json_pretty().unwrap();
        let b = make().to_json_pretty().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"schema_version\": 1"));
        assert!(a.contains("\"tool\": \"rydense\""));
        assert!(a.contains("\"command\": \"fit\""));
        assert!(a.contains("\"config_sha256\""));
        assert!(a.contains("\"value\": 1.5"));
        assert!(!a.contains("time"), "manifests must not embed timestamps");
    }

    #[test]
    fn absent_config_leaves_hash_null() {
        let m = Manifest::new("table", None, Payload { value: 0.0 });
        let json = m.to_json_pretty().unwrap();
        assert!(json.contains("\"config_sha256\": null"));
    }

    #[test]
    fn write_creates_readable_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        Manifest::new("noise", None, Payload { value: 2.0 })
            .write_to(&path)
            .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["result"]["value"], 2.0);
        assert!(text.ends_with('\n'));
    }
}
