//! JSON reports with a provenance block.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::constants::Params;
use crate::error::Result;

pub const TOOL_NAME: &str = "fracgel";

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Git-style blob hash: `sha256("blob <len>\0" ++ bytes)`, lowercase hex.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

pub fn hash_input(path: impl AsRef<Path>) -> Result<InputHash> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    Ok(InputHash { path: path.display().to_string(), sha256: blob_hash(&bytes) })
}

/// Overrides of the adaptive quadrature stopping rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadOverrides {
    pub abs: Option<f64>,
    pub rel: Option<f64>,
}

/// Everything needed to reproduce a run, together with its input files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub params: Option<Params>,
    pub inputs: Vec<String>,
    /// Subcommand-specific arguments (`x0`, `r`, `rho`, ...).
    pub args: BTreeMap<String, Value>,
    pub quadrature: QuadOverrides,
    /// Pass/fail tolerance overrides by name.
    pub tolerances: BTreeMap<String, f64>,
    pub out_dir: Option<String>,
    pub seed: u64,
    pub serial: bool,
}

impl RunConfig {
    pub fn new(subcommand: &str) -> Self {
        Self { subcommand: subcommand.into(), ..Default::default() }
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
}

impl Provenance {
    pub fn new(config: &RunConfig, inputs: Vec<InputHash>) -> Self {
        Self { tool: TOOL_NAME.into(), version: tool_version().into(), config: config.clone(), inputs }
    }

    /// Hash every input path named in `config`.
    pub fn for_config(config: &RunConfig) -> Result<Self> {
        let inputs = config.inputs.iter().map(hash_input).collect::<Result<_>>()?;
        Ok(Self::new(config, inputs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub operation: String,
    pub params: Option<Params>,
    pub value: Value,
    /// Tolerance the result was judged against, when there is one.
    pub tolerance: Option<f64>,
    pub passed: bool,
    pub certificate: Value,
    pub provenance: Provenance,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(blob_hash(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
        assert_eq!(blob_hash(b"").len(), 64);
    }

    #[test]
    fn config_roundtrip() {
        let mut c = RunConfig::new("energy");
        c.params = Some(Params::new(1, 0.5).unwrap());
        c.args.insert("r".into(), 1.0.into());
        c.tolerances.insert("split".into(), 0.1);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tolerance("split", 0.05), 0.1);
        assert_eq!(back.tolerance("other", 0.05), 0.05);
    }
}
