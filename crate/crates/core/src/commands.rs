//! The operator commands behind the `witgen` binary, callable as a library.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::feedback::{self, RunContext, RunError, RunRecord, Workspaces};
use crate::focal::{self, Level};
use crate::harness::{HarnessError, TestExecutor, WorkspaceLock};
use crate::layout::{run_key, OutputLayout};
use crate::llm::{ChatProvider, LlmClient, Mode, TranscriptStore, DEFAULT_MODEL};
use crate::manifest::{self, ManifestError, Severity, VulnEntry};
use crate::par;
use crate::prompt::{self, PromptConfig, Variant};
use crate::report::{self, BundleInputs, BundleSummary, Exclusions, Format, LabelSet, ReportError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown entry id `{0}`")]
    UnknownEntry(String),
    #[error("{invalid} of {total} manifest entries failed validation")]
    Invalid { invalid: usize, total: usize },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings for `run`, after merging the config file and flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub levels: Vec<Level>,
    pub configs: Vec<Variant>,
    pub mode: Mode,
    pub workers: usize,
    pub out: PathBuf,
    pub model: String,
    /// Replay also checks that each sent prompt matches the recording.
    pub strict: bool,
    pub dry_run: bool,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            levels: Level::ALL.to_vec(),
            configs: vec![Variant::Baseline],
            mode: Mode::Replay,
            workers: 1,
            out: out.into(),
            model: DEFAULT_MODEL.into(),
            strict: false,
            dry_run: false,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.levels.is_empty() {
            return Err(CliError::Usage("no context levels selected".into()));
        }
        if self.configs.is_empty() {
            return Err(CliError::Usage("no prompt configs selected".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// What happened to one (entry, level, config) run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    /// A complete record was already on disk.
    Skipped,
    Completed,
    Failed,
    /// Dry run: would have run.
    Planned,
}

impl JobStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Skipped => "skipped",
            JobStatus::Completed => "completed",
            JobStatus::Failed => "failed",
            JobStatus::Planned => "planned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobResult {
    pub key: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub jobs: Vec<JobResult>,
}

impl RunSummary {
    pub fn count(&self, status: JobStatus) -> usize {
        self.jobs.iter().filter(|j| j.status == status).count()
    }

    /// 0 when every requested record exists and is complete, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.count(JobStatus::Failed) == 0 {
            0
        } else {
            2
        }
    }
}

struct Job<'a> {
    entry: &'a VulnEntry,
    level: Level,
    config: Variant,
}

fn complete_on_disk(layout: &OutputLayout, job: &Job<'_>) -> bool {
    let path = layout.record_path(job.config, job.level, &job.entry.id);
    path.exists() && feedback::load_record(&path).is_ok_and(|r| r.is_complete())
}

/// Stores a failed run so the failure is visible in the runs tree; keeps
/// whatever iterations an earlier attempt saved.
fn record_failure(layout: &OutputLayout, job: &Job<'_>, err: &str) {
    let path = layout.record_path(job.config, job.level, &job.entry.id);
    let mut record =
        feedback::load_record(&path).unwrap_or_else(|_| RunRecord::new(job.entry, job.level, job.config));
    record.error = Some(err.to_string());
    if let Err(e) = feedback::save_record(&path, &record) {
        log::error!("could not save failed record {}: {e}", path.display());
    }
}

fn run_job(job: &Job<'_>, ctx: &RunContext<'_>) -> JobResult {
    let key = run_key(job.config, job.level, &job.entry.id);
    let attempt = || -> Result<RunRecord, RunError> {
        let dir = ctx.layout.workspace_dir(job.config, job.level, &job.entry.id);
        let _before = WorkspaceLock::acquire(&dir.join("before"))?;
        let _after = WorkspaceLock::acquire(&dir.join("after"))?;
        let ws = Workspaces::materialize(job.entry, &dir)?;
        feedback::run_entry(job.entry, job.level, PromptConfig::from(job.config), ctx, &ws)
    };
    match attempt() {
        Ok(_) => JobResult {
            key,
            status: JobStatus::Completed,
            error: None,
        },
        Err(e) => {
            let msg = e.to_string();
            log::error!("{key}: {msg}");
            // a locked workspace belongs to another process; leave its record alone
            if !matches!(e, RunError::Harness(HarnessError::Locked(_))) {
                record_failure(ctx.layout, job, &msg);
            }
            JobResult {
                key,
                status: JobStatus::Failed,
                error: Some(msg),
            }
        }
    }
}

/// Runs every (entry x level x config) combination not already complete.
/// Per-run failures are recorded and reported in the summary; only
/// configuration problems are returned as errors.
pub fn cmd_run(
    cfg: &RunConfig,
    executor: &dyn TestExecutor,
    provider: Option<Box<dyn ChatProvider>>,
) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let entries = manifest::load_manifest(&cfg.manifest)?;
    let layout = OutputLayout::new(&cfg.out);
    let mut store = TranscriptStore::new(cfg.mode, &layout.transcripts);
    store.strict = cfg.strict;
    if cfg.mode != Mode::Replay && provider.is_none() && !cfg.dry_run {
        return Err(CliError::Llm(crate::llm::LlmError::NoProvider(cfg.mode)));
    }
    let client = LlmClient::new(store, provider);

    let mut jobs = Vec::new();
    for entry in &entries {
        for &config in &cfg.configs {
            for &level in &cfg.levels {
                jobs.push(Job { entry, level, config });
            }
        }
    }

    if cfg.dry_run {
        let jobs = jobs
            .iter()
            .map(|j| {
                let key = run_key(j.config, j.level, &j.entry.id);
                let missing = cfg.mode == Mode::Replay && !client.store.exists(&key);
                JobResult {
                    status: if complete_on_disk(&layout, j) {
                        JobStatus::Skipped
                    } else {
                        JobStatus::Planned
                    },
                    error: missing.then(|| format!("no transcript at {}", client.store.path(&key).display())),
                    key,
                }
            })
            .collect();
        return Ok(RunSummary { jobs });
    }

    let ctx = RunContext {
        client: &client,
        executor,
        layout: &layout,
        model: cfg.model.clone(),
    };
    let jobs = par::with_workers(cfg.workers, || {
        par::map(&jobs, |job| {
            if complete_on_disk(&layout, job) {
                log::info!("{}: complete, skipped", run_key(job.config, job.level, &job.entry.id));
                return JobResult {
                    key: run_key(job.config, job.level, &job.entry.id),
                    status: JobStatus::Skipped,
                    error: None,
                };
            }
            run_job(job, &ctx)
        })
    });
    Ok(RunSummary { jobs })
}

fn find_entry<'a>(entries: &'a [VulnEntry], id: &str) -> Result<&'a VulnEntry, CliError> {
    entries.iter().find(|e| e.id == id).ok_or_else(|| CliError::UnknownEntry(id.to_string()))
}

/// Writes `<id>.L0.txt` .. `<id>.L3.txt` for one entry into `dest`.
pub fn cmd_slice(manifest_path: &Path, entry_id: &str, dest: &Path, dry_run: bool) -> Result<Vec<PathBuf>, CliError> {
    let entries = manifest::parse_manifest(manifest_path)?;
    let entry = find_entry(&entries, entry_id)?;
    let tree = manifest::resolve_tree(&entry.before_ref)?;
    let focal_path = tree.root.join(&entry.focal_file);
    let source = fs::read_to_string(&focal_path).map_err(io(&focal_path))?;
    let contexts = focal::slice_all(&source, &entry.method_locator)
        .map_err(|e| CliError::Usage(format!("{}: {e}", focal_path.display())))?;
    let paths: Vec<PathBuf> = Level::ALL.iter().map(|l| dest.join(format!("{}.{l}.txt", entry.id))).collect();
    if dry_run {
        return Ok(paths);
    }
    fs::create_dir_all(dest).map_err(io(dest))?;
    for (ctx, path) in contexts.iter().zip(&paths) {
        let mut text = ctx.snippet.clone();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        fs::write(path, text).map_err(io(path))?;
    }
    Ok(paths)
}

/// Validation findings per entry. An error finding in any entry fails the
/// command.
pub fn cmd_validate(manifest_path: &Path) -> Result<Vec<manifest::ValidationReport>, CliError> {
    let entries = manifest::parse_manifest(manifest_path)?;
    let reports: Vec<_> = par::map(&entries, manifest::validate_entry);
    let invalid = reports.iter().filter(|r| !r.is_valid()).count();
    for r in &reports {
        for f in &r.findings {
            let line = format!("{}: {}: {}", r.entry_id, f.field, f.message);
            match f.severity {
                Severity::Error => log::error!("{line}"),
                Severity::Warning => log::warn!("{line}"),
            }
        }
    }
    if invalid > 0 {
        return Err(CliError::Invalid {
            invalid,
            total: entries.len(),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportConfig {
    pub runs: PathBuf,
    pub dest: PathBuf,
    pub labels: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub cwe_map: Option<PathBuf>,
    pub min_group: usize,
    pub format: Format,
    pub dry_run: bool,
}

impl ReportConfig {
    /// Reads `<out>/runs`, writes `<out>/report`.
    pub fn for_output(out: &Path) -> Self {
        let layout = OutputLayout::new(out);
        ReportConfig {
            runs: layout.runs,
            dest: layout.report,
            labels: None,
            exclusions: None,
            cwe_map: None,
            min_group: report::DEFAULT_MIN_GROUP,
            format: Format::Markdown,
            dry_run: false,
        }
    }
}

/// Builds the report bundle. With `dry_run` the inputs are loaded and
/// checked but nothing is written.
pub fn cmd_report(cfg: &ReportConfig) -> Result<Option<BundleSummary>, CliError> {
    let records = report::load_records(&cfg.runs)?;
    let labels = cfg.labels.as_deref().map(LabelSet::from_csv).transpose()?;
    let exclusions = cfg
        .exclusions
        .as_deref()
        .map(Exclusions::from_csv)
        .transpose()?
        .unwrap_or_default();
    let cwe_map: Option<BTreeMap<String, String>> = cfg.cwe_map.as_deref().map(report::load_cwe_map).transpose()?;
    if cfg.dry_run {
        log::info!("{} records readable; nothing written", records.len());
        return Ok(None);
    }
    let inputs = BundleInputs {
        records,
        labels,
        exclusions,
        cwe_map,
        min_group: cfg.min_group,
        format: cfg.format,
        log_root: cfg.runs.parent().map(Path::to_path_buf),
    };
    Ok(Some(report::write_bundle(&inputs, &cfg.dest)?))
}

/// Writes the prompt templates, with placeholders, one file each.
pub fn cmd_prompts(dest: &Path, dry_run: bool) -> Result<Vec<PathBuf>, CliError> {
    let catalog = prompt::catalog();
    let paths: Vec<PathBuf> = catalog.iter().map(|(name, _)| dest.join(name)).collect();
    if dry_run {
        return Ok(paths);
    }
    fs::create_dir_all(dest).map_err(io(dest))?;
    for ((_, text), path) in catalog.iter().zip(&paths) {
        fs::write(path, text).map_err(io(path))?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_validation() {
        let mut c = RunConfig::new("m.json", "out");
        assert!(c.validate().is_ok());
        c.workers = 0;
        assert!(matches!(c.validate(), Err(CliError::Usage(_))));
        c.workers = 2;
        c.levels.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn exit_code_reflects_failures() {
        let ok = JobResult {
            key: "a".into(),
            status: JobStatus::Completed,
            error: None,
        };
        let mut s = RunSummary { jobs: vec![ok.clone()] };
        assert_eq!(s.exit_code(), 0);
        s.jobs.push(JobResult {
            status: JobStatus::Failed,
            ..ok
        });
        assert_eq!(s.exit_code(), 2);
    }

    #[test]
    fn prompts_written() {
        let dir = tempfile::tempdir().unwrap();
        let paths = cmd_prompts(dir.path(), false).unwrap();
        assert_eq!(paths.len(), 7);
        assert!(paths.iter().all(|p| p.is_file()));
        let dry = tempfile::tempdir().unwrap();
        cmd_prompts(&dry.path().join("x"), true).unwrap();
        assert!(!dry.path().join("x").exists());
    }
}
