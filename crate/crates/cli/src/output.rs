//! Report files, the manifest and the timing metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, Value};

pub const MANIFEST: &str = "manifest.json";
pub const METADATA: &str = "metadata.json";
pub const CODE_VERSION: &str = concat!("dslab ", env!("CARGO_PKG_VERSION"));

/// One pass/fail comparison recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `<=`, `<`, `>=`, `==`, or `in` for an interval.
    pub relation: String,
    pub limit: Vec<f64>,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, relation: "<=".into(), limit: vec![limit], pass: value <= limit }
    }

    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, relation: "<".into(), limit: vec![limit], pass: value < limit }
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: "in".into(),
            limit: vec![target - tol, target + tol],
            pass: (value - target).abs() <= tol,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Check { name: name.into(), value: ok as u8 as f64, relation: "==".into(), limit: vec![1.0], pass: ok }
    }
}

/// Common envelope of every command report.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub parameters: BTreeMap<String, Value>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub details: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<&'a str>,
    code_version: &'a str,
    config_hash: &'a str,
    config: &'a BTreeMap<String, Value>,
    pass: bool,
    outputs: &'a [FileEntry],
    /// Written alongside, not hashed: holds wall-clock data.
    metadata: &'a str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

/// Writes files into one output directory and remembers what it wrote.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.path(name), bytes)?;
        self.record(name, bytes);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Registers a file some other writer already produced.
    pub fn register(&mut self, name: &str) -> std::io::Result<()> {
        let bytes = fs::read(self.path(name))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.into(), bytes: bytes.len(), sha256: hex(&Sha256::digest(bytes)) });
    }

    pub fn finish(
        mut self,
        command: &str,
        mode: Option<&str>,
        config: &BTreeMap<String, Value>,
        config_hash: &str,
        pass: bool,
        meta: &Metadata,
    ) -> std::io::Result<Vec<FileEntry>> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let files = self.files.clone();
        let manifest = Manifest {
            command,
            mode,
            code_version: CODE_VERSION,
            config_hash,
            config,
            pass,
            outputs: &files,
            metadata: METADATA,
        };
        self.write_json(MANIFEST, &manifest)?;
        let mut text = serde_json::to_string_pretty(meta).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(self.path(METADATA), text)?;
        Ok(files)
    }
}
