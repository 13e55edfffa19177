//! Argument parsing and the optional TOML config file. Flags given on the
//! command line override the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Deserialize;

use crate::commands::{CliError, ReportConfig, RunConfig};
use crate::focal::Level;
use crate::llm::Mode;
use crate::prompt::Variant;
use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "witgen", version, about = "Generate vulnerability-witnessing unit tests with an LLM")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// Dataset manifest (JSON)
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// live, record or replay
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Comma-separated context levels, e.g. L0,L2
    #[arg(long, global = true, value_delimiter = ',')]
    pub levels: Vec<Level>,
    /// Comma-separated prompt configs
    #[arg(long, global = true, value_delimiter = ',')]
    pub configs: Vec<Variant>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output root (runs/, transcripts/, logs/, workspaces/, report/)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Replay only if every prompt matches its recording
    #[arg(long, global = true)]
    pub strict: bool,
    /// Check inputs and print the plan without writing anything
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// TOML file with defaults for these flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the generation loop for every entry, level and config
    Run,
    /// Write the four context levels of one entry
    Slice {
        entry_id: String,
        /// Directory for the snippet files (default: current directory)
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Aggregate run records into tables and summary.json
    Report(ReportArgs),
    /// Check the manifest against the source trees
    Validate,
    /// Write the prompt templates to a directory
    Prompts {
        #[arg(long, default_value = "prompts")]
        dest: PathBuf,
    },
}

#[derive(Debug, Default, Args)]
pub struct ReportArgs {
    /// Run records (default: <out>/runs)
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Bundle directory (default: <out>/report)
    #[arg(long)]
    pub dest: Option<PathBuf>,
    /// Manual labels CSV: entry_id,level,config,label
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Syntactic exclusions CSV: entry_id,level,config
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    /// Entry to CWE CSV: entry_id,cwe_id
    #[arg(long)]
    pub cwe_map: Option<PathBuf>,
    #[arg(long)]
    pub min_group: Option<usize>,
    /// md, csv or text
    #[arg(long)]
    pub format: Option<Format>,
}

/// Config file contents. Relative paths are taken relative to the file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub mode: Option<String>,
    pub levels: Option<Vec<String>>,
    pub configs: Option<Vec<String>>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Option<String>,
    pub strict: Option<bool>,
    #[serde(default)]
    pub report: FileReportConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileReportConfig {
    pub runs: Option<PathBuf>,
    pub dest: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub cwe_map: Option<PathBuf>,
    pub min_group: Option<usize>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        rebase(&mut cfg.manifest);
        rebase(&mut cfg.out);
        let r = &mut cfg.report;
        for p in [&mut r.runs, &mut r.dest, &mut r.labels, &mut r.exclusions, &mut r.cwe_map] {
            rebase(p);
        }
        Ok(cfg)
    }
}

fn parse_all<T: FromStr<Err = String>>(items: &[String]) -> Result<Vec<T>, CliError> {
    items.iter().map(|s| s.parse().map_err(CliError::Usage)).collect()
}

pub const DEFAULT_OUT: &str = "witgen-out";

/// Flags merged over the config file.
#[derive(Debug)]
pub struct Resolved {
    pub file: FileConfig,
    pub global: GlobalArgs,
}

impl Resolved {
    pub fn new(global: GlobalArgs) -> Result<Self, CliError> {
        let file = match &global.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Resolved { file, global })
    }

    pub fn out(&self) -> PathBuf {
        self.global
            .out
            .clone()
            .or_else(|| self.file.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn manifest(&self) -> Result<PathBuf, CliError> {
        self.global
            .manifest
            .clone()
            .or_else(|| self.file.manifest.clone())
            .ok_or_else(|| CliError::Usage("--manifest is required".into()))
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let g = &self.global;
        let f = &self.file;
        let mut cfg = RunConfig::new(self.manifest()?, self.out());
        if let Some(m) = g.mode {
            cfg.mode = m;
        } else if let Some(m) = &f.mode {
            cfg.mode = m.parse().map_err(CliError::Usage)?;
        }
        if !g.levels.is_empty() {
            cfg.levels = g.levels.clone();
        } else if let Some(l) = &f.levels {
            cfg.levels = parse_all(l)?;
        }
        if !g.configs.is_empty() {
            cfg.configs = g.configs.clone();
        } else if let Some(c) = &f.configs {
            cfg.configs = parse_all(c)?;
        }
        cfg.levels.sort();
        cfg.levels.dedup();
        cfg.configs.sort();
        cfg.configs.dedup();
        if let Some(w) = g.workers.or(f.workers) {
            cfg.workers = w;
        }
        if let Some(m) = g.model.clone().or_else(|| f.model.clone()) {
            cfg.model = m;
        }
        cfg.strict = g.strict || f.strict.unwrap_or(false);
        cfg.dry_run = g.dry_run;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn report_config(&self, args: &ReportArgs) -> Result<ReportConfig, CliError> {
        let f = &self.file.report;
        let mut cfg = ReportConfig::for_output(&self.out());
        if let Some(r) = args.runs.clone().or_else(|| f.runs.clone()) {
            cfg.runs = r;
        }
        if let Some(d) = args.dest.clone().or_else(|| f.dest.clone()) {
            cfg.dest = d;
        }
        cfg.labels = args.labels.clone().or_else(|| f.labels.clone());
        cfg.exclusions = args.exclusions.clone().or_else(|| f.exclusions.clone());
        cfg.cwe_map = args.cwe_map.clone().or_else(|| f.cwe_map.clone());
        if let Some(m) = args.min_group.or(f.min_group) {
            if m == 0 {
                return Err(CliError::Usage("--min-group must be at least 1".into()));
            }
            cfg.min_group = m;
        }
        if let Some(fmt) = args.format {
            cfg.format = fmt;
        } else if let Some(s) = &f.format {
            cfg.format = s.parse().map_err(CliError::Usage)?;
        }
        cfg.dry_run = self.global.dry_run;
        Ok(cfg)
    }
}
