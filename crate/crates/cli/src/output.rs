//! Artifact collection and emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// A named file produced by an experiment, held in memory until emission.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// All files of one run, in emission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    files: Vec<Artifact>,
}

impl Artifacts {
    pub fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push(Artifact { name: name.into(), bytes });
    }

    /// Serializes `rows` as CSV; the header follows the field order of `S`.
    pub fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        self.push(name, w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))?);
        Ok(())
    }

    /// Stores the output of a writer-based exporter.
    pub fn with_writer(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> mcmccoup_core::Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.push(name, buf);
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.push(name, bytes);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Artifact> {
        self.files.iter().find(|a| a.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

/// Run metadata written next to the artifacts. Feeding it back as a config
/// replays the run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub experiment: &'a str,
    pub seed: u64,
    pub code_version: &'static str,
    pub config: &'a ExperimentConfig,
    pub files: Vec<&'a str>,
    pub summary: &'a Value,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Writes every artifact and the manifest under `dir`. On failure the files
/// already written by this call are removed.
pub fn emit(dir: &Path, artifacts: &Artifacts, config: &ExperimentConfig, summary: &Value) -> Result<Vec<PathBuf>> {
    if artifacts.is_empty() {
        return Err(CliError::Serialize("nothing to emit".into()));
    }
    let manifest = Manifest {
        experiment: config.experiment()?.name(),
        seed: config.seed()?,
        code_version: env!("CARGO_PKG_VERSION"),
        config,
        files: artifacts.names(),
        summary,
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    manifest_bytes.push(b'\n');

    let created_dir = !dir.exists();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let entries = artifacts.files.iter().map(|a| (a.name.as_str(), &a.bytes)).chain([(MANIFEST_NAME, &manifest_bytes)]);
    for (name, bytes) in entries {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if created_dir {
                let _ = fs::remove_dir(dir);
            }
            return Err(io_err(&path)(e));
        }
        written.push(path);
    }
    Ok(written)
}
