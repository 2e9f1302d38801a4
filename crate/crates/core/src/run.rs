//! Run directories and manifests.
//!
//! Every command writes into one run directory under `$CG_RUNS_DIR` (default
//! `runs/`), named `<command>-<config hash prefix>` unless an explicit
//! directory is given. The directory holds `manifest.json` next to the
//! command's artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::seed;

pub const RUNS_DIR_ENV: &str = "CG_RUNS_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Streams recorded in every manifest.
pub const STREAMS: [&str; 6] = [
    seed::SPLIT,
    seed::NEGATIVES,
    seed::BATCHING,
    seed::PERTURBATION,
    seed::SYNTHESIS,
    seed::EVALUATION,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    /// Paths relative to the run directory.
    pub outputs: Vec<Artifact>,
    pub toolkit_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hash of the canonical JSON of `config` (object keys sorted).
pub fn config_hash(command: &str, config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(&(command, config)).unwrap_or_default();
    sha256_bytes(canonical.as_bytes())
}

pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<Artifact>,
    outputs: Vec<String>,
}

impl RunDir {
    /// Creates the run directory. `explicit` overrides the default location.
    pub fn create(command: &str, config: serde_json::Value, seed: u64, explicit: Option<&Path>) -> io::Result<Self> {
        let hash = config_hash(command, &config);
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => runs_root().join(format!("{command}-{}", &hash[..12])),
        };
        fs::create_dir_all(&path)?;
        Ok(Self {
            path,
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> io::Result<()> {
        let path = path.as_ref();
        self.inputs.push(Artifact {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn join(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.path.join(rel)
    }

    /// Writes `bytes` to `rel` inside the run directory and records it.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = self.path.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.record(rel);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> io::Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, rel: &str, values: &[T]) -> io::Result<PathBuf> {
        let mut s = String::new();
        for v in values {
            s.push_str(&serde_json::to_string(v).map_err(io::Error::other)?);
            s.push('\n');
        }
        self.write(rel, s.as_bytes())
    }

    /// Records an artifact written by other code. Directories are expanded to
    /// the files they contain.
    pub fn record(&mut self, rel: &str) {
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_string());
        }
    }

    fn expand(&self) -> io::Result<Vec<String>> {
        let mut files = Vec::new();
        for rel in &self.outputs {
            collect_files(&self.path, Path::new(rel), &mut files)?;
        }
        files.sort();
        files.dedup();
        Ok(files)
    }

    pub fn finish(self) -> io::Result<RunManifest> {
        let outputs = self
            .expand()?
            .into_iter()
            .map(|rel| {
                Ok(Artifact {
                    sha256: sha256_file(self.path.join(&rel))?,
                    path: rel,
                })
            })
            .collect::<io::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            config_hash: config_hash(&self.command, &self.config),
            command: self.command,
            config: self.config,
            seed: self.seed,
            seeds: STREAMS
                .iter()
                .map(|s| (s.to_string(), seed::derive(self.seed, s, &[])))
                .collect(),
            inputs: self.inputs,
            outputs,
            toolkit_version: TOOLKIT_VERSION.to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        s.push('\n');
        fs::write(self.path.join(MANIFEST_FILE), s)?;
        Ok(manifest)
    }
}

fn collect_files(root: &Path, rel: &Path, out: &mut Vec<String>) -> io::Result<()> {
    let full = root.join(rel);
    if full.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(&full)?.collect::<io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            collect_files(root, &rel.join(e.file_name()), out)?;
        }
    } else if full.is_file() {
        out.push(rel.to_string_lossy().replace('\\', "/"));
    }
    Ok(())
}

/// Reads a manifest and re-hashes its inputs and outputs; returns the paths
/// whose content no longer matches.
pub fn verify_manifest(run_dir: impl AsRef<Path>) -> io::Result<(RunManifest, Vec<String>)> {
    let dir = run_dir.as_ref();
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?).map_err(io::Error::other)?;
    let mut stale = Vec::new();
    for a in &manifest.inputs {
        if sha256_file(&a.path).ok().as_deref() != Some(a.sha256.as_str()) {
            stale.push(a.path.clone());
        }
    }
    for a in &manifest.outputs {
        if sha256_file(dir.join(&a.path)).ok().as_deref() != Some(a.sha256.as_str()) {
            stale.push(a.path.clone());
        }
    }
    Ok((manifest, stale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let mut run = RunDir::create("stats", serde_json::json!({"a": 1}), 7, Some(&tmp.path().join("run"))).unwrap();
        run.add_input(&input).unwrap();
        run.write_json("report.json", &serde_json::json!({"x": 1})).unwrap();
        let m = run.finish().unwrap();
        assert_eq!(m.inputs[0].sha256, sha256_bytes(b"abc"));
        assert_eq!(m.outputs.len(), 1);
        let (_, stale) = verify_manifest(tmp.path().join("run")).unwrap();
        assert!(stale.is_empty());
        fs::write(tmp.path().join("run/report.json"), "{}").unwrap();
        let (_, stale) = verify_manifest(tmp.path().join("run")).unwrap();
        assert_eq!(stale, vec!["report.json".to_string()]);
    }

    #[test]
    fn config_hash_depends_on_command() {
        let c = serde_json::json!({"seed": 1});
        assert_ne!(config_hash("a", &c), config_hash("b", &c));
        assert_eq!(config_hash("a", &c), config_hash("a", &c));
    }
}
