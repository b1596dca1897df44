use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

/// I/O failure on a named path.
#[derive(Debug)]
pub struct PathError {
    pub path: String,
    pub source: std::io::Error,
}

impl std::fmt::Display for PathError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cannot access `{}`", self.path)
    }
}

impl std::error::Error for PathError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn path_error(path: &Path, source: std::io::Error) -> PathError {
    PathError {
        path: path.display().to_string(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// An input file and its digest.
#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

pub fn read_input(path: &Path) -> Result<(Vec<u8>, InputRecord), PathError> {
    let bytes = std::fs::read(path).map_err(|e| path_error(path, e))?;
    let record = InputRecord {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, record))
}

/// Writes result files into one directory and finishes with a manifest.
pub struct Emitter {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self, PathError> {
        std::fs::create_dir_all(dir).map_err(|e| path_error(dir, e))?;
        // A stale error file from an earlier failed run would be misleading.
        let stale = dir.join("error.json");
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| path_error(&stale, e))?;
        }
        Ok(Emitter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PathError> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| path_error(&path, e))?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        Ok(self.write(name, text.as_bytes())?)
    }

    /// Writes `manifest.json`: command, seed, resolved configuration, tool
    /// versions, input digests and output digests. Output locations and
    /// thread counts are left out so reruns elsewhere produce the same bytes.
    pub fn finish<C: Serialize>(
        mut self,
        command: &str,
        seed: Option<u64>,
        config: &C,
        inputs: &[InputRecord],
    ) -> anyhow::Result<()> {
        let outputs: Vec<_> = self
            .written
            .iter()
            .map(|(file, sha)| json!({ "file": file, "sha256": sha }))
            .collect();
        let manifest = json!({
            "tool": "staggered",
            "cli_version": env!("CARGO_PKG_VERSION"),
            "library_version": staggered::VERSION,
            "command": command,
            "seed": seed,
            "config": config,
            "inputs": inputs,
            "outputs": outputs,
        });
        self.write_json("manifest.json", &manifest)
    }
}
