//! Run directories, CSV files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

/// Bumped whenever a CSV layout changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";
pub const SUMMARY_NAME: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub created_unix: u64,
    pub code_version: String,
    pub schema_version: u32,
    pub grid_hash: String,
    pub resolved_mu: f64,
    /// The configuration with all defaults and `μ` resolved.
    pub config: RunConfig,
    /// File name to CSV header.
    pub files: BTreeMap<String, String>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?)
    }
}

/// Creates `{base}/{experiment}-{seed}-{unix seconds}`, adding a counter
/// if that name is taken.
pub fn create_run_dir(base: &Path, experiment: &str, seed: u64) -> Result<(PathBuf, u64)> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    fs::create_dir_all(base)?;
    let stem = format!("{experiment}-{seed}-{now}");
    for k in 0..1000 {
        let name = if k == 0 { stem.clone() } else { format!("{stem}-{k}") };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((dir, now)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Config(format!("could not create a fresh run directory under {}", base.display())))
}

/// Collects the files of one run and writes the manifest last.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    assertions: Vec<Assertion>,
    summary: Vec<String>,
}

impl RunWriter {
    pub fn new(dir: PathBuf) -> Self {
        RunWriter { dir, files: BTreeMap::new(), assertions: Vec::new(), summary: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes a CSV whose first line is its header.
    pub fn csv(&mut self, name: &str, content: &str) -> Result<()> {
        let header = content.lines().next().unwrap_or_default().to_string();
        fs::write(self.dir.join(name), content)?;
        self.files.insert(name.into(), header);
        Ok(())
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn assert(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        let detail = detail.into();
        self.summary.push(format!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" }));
        self.assertions.push(Assertion { name: name.into(), passed, detail });
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn finish(self, experiment: &str, created_unix: u64, config: &RunConfig, grid_hash: String) -> Result<Manifest> {
        let resolved = config.resolved()?;
        let manifest = Manifest {
            experiment: experiment.into(),
            seed: config.noise.seed,
            created_unix,
            code_version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            grid_hash,
            resolved_mu: config.resolved_mu()?,
            config: resolved,
            files: self.files,
            passed: self.assertions.iter().all(|a| a.passed),
            assertions: self.assertions,
        };
        let mut summary = format!("{experiment} (seed {}, mu = {})\n", manifest.seed, manifest.resolved_mu);
        for line in &self.summary {
            summary.push_str(line);
            summary.push('\n');
        }
        fs::write(self.dir.join(SUMMARY_NAME), summary)?;
        fs::write(self.dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}
