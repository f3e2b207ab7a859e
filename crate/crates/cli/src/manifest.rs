use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use wavefield_core::{Error, Result};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_bytes(path: &str, bytes: &[u8]) -> Self {
        Self {
            path: path.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }

    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::of_bytes(&path.display().to_string(), &bytes))
    }
}

/// Files a command read and wrote, besides its primary output.
#[derive(Debug, Default)]
pub struct Files {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub subcommand: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_s: f64,
}

impl RunManifest {
    /// Append as one JSON line.
    pub fn append(&self, path: &Path) -> Result<()> {
        let mut line = serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}
