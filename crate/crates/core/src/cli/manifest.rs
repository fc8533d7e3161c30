use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::Command;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Environment variables that may change defaults; their values are
/// recorded in every manifest.
pub const SNAPSHOT_ENV: &[&str] = &["RAYON_NUM_THREADS"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory for outputs, absolute for inputs.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, recorded_as: String) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: recorded_as,
            bytes: data.len() as u64,
            sha256: hex(&Sha256::digest(&data)),
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// The resolved subcommand with its flags.
    pub invocation: Command,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub env: BTreeMap<String, String>,
    pub timestamp_unix_s: u64,
}

impl RunManifest {
    pub fn new(invocation: &Command, config: &RunConfig, seeds: Vec<u64>, out_dir: &Path) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: invocation.name().to_string(),
            invocation: invocation.clone(),
            config: config.clone(),
            seeds,
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            env: SNAPSHOT_ENV
                .iter()
                .filter_map(|k| std::env::var(k).ok().map(|v| (k.to_string(), v)))
                .collect(),
            timestamp_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path, path.display().to_string())?);
        Ok(())
    }

    /// Records `name` inside the output directory.
    pub fn output(&mut self, name: &str) -> Result<()> {
        self.outputs
            .push(FileDigest::of(&self.out_dir.join(name), name.to_string())?);
        Ok(())
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Version {
                found,
                expected: MANIFEST_SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMismatch {
    pub path: String,
    pub expected_sha256: String,
    pub found_sha256: Option<String>,
}

/// Output digests of `fresh` that differ from `recorded`.
pub fn compare_outputs(recorded: &RunManifest, fresh: &RunManifest) -> Vec<OutputMismatch> {
    recorded
        .outputs
        .iter()
        .filter_map(|r| {
            let found = fresh.outputs.iter().find(|f| f.path == r.path);
            match found {
                Some(f) if f.sha256 == r.sha256 => None,
                _ => Some(OutputMismatch {
                    path: r.path.clone(),
                    expected_sha256: r.sha256.clone(),
                    found_sha256: found.map(|f| f.sha256.clone()),
                }),
            }
        })
        .collect()
}
