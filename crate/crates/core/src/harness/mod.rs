//! Placing generated tests into workspaces, running them and classifying
//! the build output.

mod classify;
mod exec;
mod place;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::manifest::Version;

pub use classify::{classify_log, LogClassifier, MarkerConfig, MarkerError};
pub use exec::{run_generated_test, ProcessExecutor, TestExecutor, WorkspaceLock};
pub use place::{derive_test_class_name, place_test, PlacedTest, TestClassName, PLACED_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "ERR")]
    Err,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Pass, Verdict::Fail, Verdict::Err];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Err => "ERR",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PASS" => Ok(Verdict::Pass),
            "FAIL" => Ok(Verdict::Fail),
            "ERR" | "ERROR" => Ok(Verdict::Err),
            _ => Err(format!("unknown verdict `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFlag {
    ZeroTestsRun,
    NotRecognizedAsTest,
    Timeout,
    /// No marker of the configured build tool matched at all.
    UnrecognizedLog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub verdict: Verdict,
    pub tests_run: u32,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub notes: BTreeSet<OutcomeFlag>,
}

impl TestOutcome {
    pub fn new(verdict: Verdict) -> Self {
        TestOutcome {
            verdict,
            tests_run: u32::from(verdict != Verdict::Err),
            notes: BTreeSet::new(),
        }
    }

    pub fn has(&self, flag: OutcomeFlag) -> bool {
        self.notes.contains(&flag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionLog {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub duration_secs: f64,
    pub version: Version,
    pub timed_out: bool,
}

impl ExecutionLog {
    /// stdout followed by stderr; this is also the raw `.log` file content.
    pub fn combined(&self) -> String {
        let mut text = self.stdout.clone();
        if !self.stderr.is_empty() {
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&self.stderr);
        }
        text
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("no class declaration found in generated code")]
    NoClassDeclaration,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("workspace {0} is locked by another run")]
    Locked(PathBuf),
    #[error(transparent)]
    Markers(#[from] MarkerError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// JSON written next to every raw log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSidecar {
    pub version: Version,
    pub exit_code: i32,
    pub timed_out: bool,
    pub outcome: TestOutcome,
}

/// Writes `<dir>/<version>.log` and `<dir>/<version>.json`; returns the log
/// path. Durations are left out so that reruns produce identical files.
pub fn persist_log(dir: &Path, log: &ExecutionLog, outcome: &TestOutcome) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let raw = dir.join(format!("{}.log", log.version));
    fs::write(&raw, log.combined()).map_err(io_err(&raw))?;
    let sidecar = LogSidecar {
        version: log.version,
        exit_code: log.exit_code,
        timed_out: log.timed_out,
        outcome: outcome.clone(),
    };
    let json = dir.join(format!("{}.json", log.version));
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&json, text + "\n").map_err(io_err(&json))?;
    Ok(raw)
}
