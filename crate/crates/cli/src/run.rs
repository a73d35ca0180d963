//! Input/output bookkeeping for one subcommand run and its manifest.

use std::path::{Path, PathBuf};

use chrono::Utc;
use factgpt_core::domain::{decode_records, sha256_hex, Record};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

fn digest(path: &Path, bytes: &[u8]) -> FileDigest {
    FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len(),
    }
}

/// `<path>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Tracks what a subcommand read and wrote. With `dry_run` nothing touches disk.
pub struct Run {
    command: &'static str,
    dry_run: bool,
    provider: String,
    config: Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Run {
    pub fn new(command: &'static str, dry_run: bool, provider: &str, config: Value) -> Self {
        Self {
            command,
            dry_run,
            provider: provider.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn dry_run(&self) -> bool {
        self.dry_run
    }

    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(digest(path, text.as_bytes()));
        Ok(text)
    }

    /// Strict JSON-lines read: the first bad line fails the run.
    pub fn read_records<T: Record>(&mut self, path: &Path) -> Result<Vec<T>, CliError> {
        let text = self.read(path)?;
        decode_records(&text)
            .into_strict()
            .map_err(|e| CliError::decode(path, e))
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        self.outputs.push(digest(path, contents.as_bytes()));
        if self.dry_run {
            return Ok(());
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
    }

    /// Records a file written by library code so it shows up in the manifest.
    pub fn record_output(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.outputs.push(digest(path, &bytes));
        Ok(())
    }

    /// Writes the manifest next to `primary` (unless dry-running) and returns
    /// the machine-readable summary.
    pub fn finish(self, primary: Option<&Path>, summary: Value) -> Result<Value, CliError> {
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "provider": self.provider,
            "dry_run": self.dry_run,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "config": self.config,
            "summary": summary,
            "created_at": Utc::now().to_rfc3339(),
        });
        if let (Some(primary), false) = (primary, self.dry_run) {
            let path = manifest_path(primary);
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(json!({
            "command": self.command,
            "dry_run": self.dry_run,
            "outputs": self.outputs,
            "summary": summary,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("out/pairs.jsonl")),
            Path::new("out/pairs.jsonl.manifest.json")
        );
        assert_eq!(
            manifest_path(Path::new("report.md")),
            Path::new("report.md.manifest.json")
        );
    }

    #[test]
    fn dry_run_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.jsonl");
        let mut run = Run::new("test", true, "mock", json!({}));
        run.write(&out, "{}\n").unwrap();
        let summary = run.finish(Some(&out), json!({"n": 1})).unwrap();
        assert!(!out.exists());
        assert!(!manifest_path(&out).exists());
        assert_eq!(summary["outputs"][0]["bytes"], 3);
    }
}
