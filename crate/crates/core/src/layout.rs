//! Directory layout of a pipeline output tree.
//!
//! ```text
//! <out>/runs/<config>/<level>/<entry>.json
//! <out>/transcripts/<config>/<level>/<entry>.jsonl
//! <out>/logs/<config>/<level>/<entry>/<iteration>/<before|after>.{log,json}
//! <out>/workspaces/<config>/<level>/<entry>/<before|after>/
//! <out>/report/
//! ```

use std::path::{Path, PathBuf};

use crate::focal::Level;
use crate::prompt::Variant;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLayout {
    pub root: PathBuf,
    pub runs: PathBuf,
    pub transcripts: PathBuf,
    pub logs: PathBuf,
    pub workspaces: PathBuf,
    pub report: PathBuf,
}

/// `<config>/<level>/<entry>`; also the conversation id.
pub fn run_key(config: Variant, level: Level, entry_id: &str) -> String {
    format!("{config}/{level}/{entry_id}")
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        OutputLayout {
            runs: root.join("runs"),
            transcripts: root.join("transcripts"),
            logs: root.join("logs"),
            workspaces: root.join("workspaces"),
            report: root.join("report"),
            root,
        }
    }

    pub fn record_path(&self, config: Variant, level: Level, entry_id: &str) -> PathBuf {
        self.runs.join(format!("{}.json", run_key(config, level, entry_id)))
    }

    pub fn log_dir(&self, config: Variant, level: Level, entry_id: &str, iteration: u32) -> PathBuf {
        self.logs.join(run_key(config, level, entry_id)).join(iteration.to_string())
    }

    pub fn workspace_dir(&self, config: Variant, level: Level, entry_id: &str) -> PathBuf {
        self.workspaces.join(run_key(config, level, entry_id))
    }

    /// `path` relative to the output root, with `/` separators.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }
}
