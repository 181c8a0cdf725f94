//! Run directories, atomic file writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub rng_seed: u64,
    pub start: String,
    pub end: Option<String>,
    pub status: String,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub version: String,
}

/// One command invocation's output directory plus its manifest.
pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    /// Creates `out_dir/<name>`, where `name` defaults to a UTC timestamp. A
    /// numeric suffix is added if the directory already exists.
    pub fn create(out_dir: &Path, name: Option<&str>, command: &str, config: Value, rng_seed: u64) -> Result<Self> {
        let start = Utc::now();
        let base = name
            .map(str::to_owned)
            .unwrap_or_else(|| start.format("%Y%m%d-%H%M%S").to_string());
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let mut root = out_dir.join(&base);
        let mut k = 1;
        loop {
            match fs::create_dir(&root) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    k += 1;
                    root = out_dir.join(format!("{base}-{k}"));
                }
                Err(e) => return Err(e).with_context(|| format!("creating {}", root.display())),
            }
        }
        let run = RunDir {
            root,
            manifest: RunManifest {
                command: command.to_owned(),
                config,
                rng_seed,
                start: start.to_rfc3339_opts(SecondsFormat::Millis, true),
                end: None,
                status: "running".into(),
                artifacts: Vec::new(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn record(&mut self, rel: &str) {
        if !self.manifest.artifacts.iter().any(|a| a == rel) {
            self.manifest.artifacts.push(rel.to_owned());
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        write_atomic(&path, bytes)?;
        self.record(rel);
        Ok(path)
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<PathBuf> {
        let path = self.path(rel);
        write_json(&path, value)?;
        self.record(rel);
        Ok(path)
    }

    fn write_manifest(&self) -> Result<()> {
        write_json(&self.root.join("manifest.json"), &self.manifest)
    }

    pub fn finish(mut self, status: &str) -> Result<PathBuf> {
        self.manifest.end = Some(Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true));
        self.manifest.status = status.to_owned();
        self.write_manifest()?;
        Ok(self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        // no stray temp files left next to it
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn run_dirs_never_collide() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunDir::create(dir.path(), Some("x"), "t", Value::Null, 0).unwrap();
        let b = RunDir::create(dir.path(), Some("x"), "t", Value::Null, 0).unwrap();
        let b = b.finish("ok").unwrap();
        assert!(b.ends_with("x-2"));
        let root = a.finish("ok").unwrap();
        assert_ne!(root, b);
        let m: Value = serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["status"], "ok");
        assert!(m["end"].is_string());
    }
}
