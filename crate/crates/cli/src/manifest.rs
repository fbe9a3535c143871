//! Run manifest: what went in, what came out, and with which settings.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest(path: &Path) -> anyhow::Result<FileDigest> {
    let mut file = std::fs::File::open(path).with_context(|| format!("{}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

/// Bookkeeping for one subcommand invocation.
pub struct Run {
    pub command: &'static str,
    pub out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<&'static str, u64>,
    pub summary: serde_json::Value,
}

impl Run {
    pub fn new(command: &'static str, out: PathBuf) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        Ok(Run {
            command,
            out,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
            summary: serde_json::Value::Null,
        })
    }

    pub fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    /// Path for an artifact named `name` under the output directory. Refuses
    /// to overwrite any input of this run.
    pub fn output(&mut self, name: impl AsRef<Path>) -> anyhow::Result<PathBuf> {
        let path = self.out.join(name);
        if let Ok(target) = path.canonicalize() {
            for input in &self.inputs {
                if input.canonicalize().is_ok_and(|i| i == target) {
                    bail!("output {} would overwrite an input", path.display());
                }
            }
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Registers files written by a library call.
    pub fn outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    /// Writes `manifest-<command>.json` and returns its path.
    pub fn finish(
        self,
        arguments: serde_json::Value,
        config: Option<&Path>,
    ) -> anyhow::Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            command: &'static str,
            arguments: serde_json::Value,
            config: Option<FileDigest>,
            seeds: &'a BTreeMap<&'static str, u64>,
            inputs: Vec<FileDigest>,
            outputs: Vec<FileDigest>,
            summary: &'a serde_json::Value,
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            arguments,
            config: config.map(digest).transpose()?,
            seeds: &self.seeds,
            inputs: self
                .inputs
                .iter()
                .map(|p| digest(p))
                .collect::<anyhow::Result<_>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|p| digest(p))
                .collect::<anyhow::Result<_>>()?,
            summary: &self.summary,
        };
        let path = self.out.join(format!("manifest-{}.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("{}", path.display()))?;
        Ok(path)
    }
}
