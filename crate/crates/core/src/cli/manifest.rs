//! Run manifests: everything needed to repeat a command.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::settings::RunConfig;
use crate::data::SourceKind;
use crate::error::{QacnnError, Result};

/// `qacnn <version> (<git describe>)`, or just the version outside a checkout.
pub fn build_id() -> String {
    match option_env!("QACNN_GIT_DESCRIBE") {
        Some(d) => format!("qacnn {} ({d})", env!("CARGO_PKG_VERSION")),
        None => format!("qacnn {}", env!("CARGO_PKG_VERSION")),
    }
}

/// A command with its input paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Train {
        data: PathBuf,
        val: Option<PathBuf>,
        embeddings: PathBuf,
    },
    Eval {
        checkpoints: Vec<PathBuf>,
        data: PathBuf,
        embeddings: PathBuf,
    },
    Predict {
        checkpoints: Vec<PathBuf>,
        data: PathBuf,
        embeddings: PathBuf,
    },
    Gradcheck {
        dropout: bool,
    },
    Ablate {
        data: PathBuf,
        val: PathBuf,
        embeddings: PathBuf,
    },
    ExportAttention {
        checkpoint: PathBuf,
        record_id: String,
        data: PathBuf,
        embeddings: PathBuf,
    },
    Generate {
        records: usize,
        held_out: usize,
    },
    Convert {
        source: PathBuf,
        kind: SourceKind,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Train { .. } => "train",
            Job::Eval { .. } => "eval",
            Job::Predict { .. } => "predict",
            Job::Gradcheck { .. } => "gradcheck",
            Job::Ablate { .. } => "ablate",
            Job::ExportAttention { .. } => "export-attention",
            Job::Generate { .. } => "generate",
            Job::Convert { .. } => "convert",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub created_unix: u64,
    pub build: String,
    pub seed: u64,
    pub job: Job,
    pub config: RunConfig,
    pub out: PathBuf,
}

impl RunManifest {
    pub fn new(job: Job, config: RunConfig, out: PathBuf) -> Self {
        RunManifest {
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            build: build_id(),
            seed: config.train.seed,
            job,
            config,
            out,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| QacnnError::io(dir, e))?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| QacnnError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| QacnnError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| QacnnError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}
