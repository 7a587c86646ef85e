//! Run-directory layout and JSON handoff between stages.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use topicmine::CourseManifest;

pub const RUN: &str = "run.json";
pub const QUESTIONS: &str = "questions.json";
pub const FIRST_ATTEMPTS: &str = "first_attempts.json";
pub const DIFFICULTY: &str = "difficulty.json";
pub const CONSENSUS: &str = "consensus.json";
pub const IRT: &str = "irt.json";
pub const SYNOPSES: &str = "synopses.json";
pub const SYNOPSES_USAGE: &str = "synopses.usage.json";
pub const MISCONCEPTIONS: &str = "misconceptions.json";
pub const MISCONCEPTIONS_USAGE: &str = "misconceptions.usage.json";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_JSON: &str = "report.json";
pub const WORKSHEET: &str = "worksheet.tsv";

/// An error carrying the process exit code.
#[derive(Debug)]
pub struct Coded {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

/// Exit 1: bad input or a missing upstream artifact.
pub fn invalid(message: impl fmt::Display) -> anyhow::Error {
    Coded {
        code: 1,
        message: message.to_string(),
    }
    .into()
}

/// Exit 2: provider or I/O failure.
pub fn provider(message: impl fmt::Display) -> anyhow::Error {
    Coded {
        code: 2,
        message: message.to_string(),
    }
    .into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Coded>())
        .map_or(2, |c| c.code)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    /// Absolute, or relative to the run directory.
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub status: String,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub details: serde_json::Value,
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| provider(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| provider(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| provider(format!("{}: {e}", root.display())))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    /// Reads an upstream artifact; a missing file names the stage that produces it.
    pub fn read<T: DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(invalid(format!(
                "missing upstream artifact {} (run `{producer}` first)",
                path.display()
            )));
        }
        read_json(&path)
    }

    pub fn write<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        self.write_str(name, &to_pretty(value))
    }

    pub fn write_str(&self, name: &str, text: &str) -> Result<String> {
        write_text(&self.path(name), text)?;
        Ok(name.to_string())
    }

    pub fn manifest(&self) -> Result<CourseManifest> {
        let info: RunInfo = self.read(RUN, "ingest")?;
        let path = self.root.join(&info.manifest);
        topicmine::load_manifest(&path)
            .map_err(|e| invalid(format!("manifest {}: {e}", path.display())))
    }

    pub fn write_summary(&self, summary: &StageSummary) -> Result<()> {
        write_text(
            &self.path(&format!("{}.summary.json", summary.stage)),
            &to_pretty(summary),
        )
        .context("writing stage summary")
    }
}
