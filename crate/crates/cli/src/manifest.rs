use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// What one stage read and wrote.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    pub inputs: BTreeMap<String, InputRecord>,
    /// Artifact file name (relative to the output directory) to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl StageRecord {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> CliResult<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.insert(
            name.to_string(),
            InputRecord {
                path: path.to_path_buf(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn artifact(&mut self, out_dir: &Path, file_name: &str) -> CliResult<()> {
        let sha = sha256_file(&out_dir.join(file_name))?;
        self.artifacts.insert(file_name.to_string(), sha);
        Ok(())
    }
}

/// `manifest.json` in an output directory; each stage replaces its own entry.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(out_dir: &Path) -> CliResult<Self> {
        let path = out_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::data(path.display(), e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }

    /// Every artifact checksum, keyed by `stage/file`.
    pub fn artifact_checksums(&self) -> BTreeMap<String, String> {
        self.stages
            .iter()
            .flat_map(|(stage, r)| r.artifacts.iter().map(move |(f, h)| (format!("{stage}/{f}"), h.clone())))
            .collect()
    }

    pub fn record(out_dir: &Path, stage: &str, record: StageRecord) -> CliResult<()> {
        let mut manifest = Self::load(out_dir)?;
        manifest.stages.insert(stage.to_string(), record);
        let path = out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
