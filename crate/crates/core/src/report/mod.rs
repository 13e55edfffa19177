//! Aggregation of run records into rates, tables and a report bundle.

mod bundle;
mod failure;
mod tables;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::feedback::{RunRecord, VerdictPair};
use crate::focal::Level;
use crate::manifest::cwe_group;
use crate::par;
use crate::prompt::Variant;

pub use bundle::{load_records, write_bundle, BundleInputs, BundleSummary, FailureRow};
pub use failure::{classify_failure, FailureCategory, FailurePattern};
pub use tables::{
    ablation_table, config_summaries, cwe_table, emit_results_table, AblationRow, AblationTable, CweRow, CweTable,
    Format, Table, AVERAGE, DEFAULT_MIN_GROUP,
};

pub fn syntactic_correct(record: &RunRecord) -> bool {
    !record.final_pair.has_err()
}

pub fn semantic_correct(record: &RunRecord) -> bool {
    record.final_pair == VerdictPair::WITNESS
}

/// Rounds to one decimal, halves away from zero.
pub fn round1(x: f64) -> f64 {
    let r = (x * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "RateRepr", from = "RateRepr")]
pub struct Rate {
    pub count: usize,
    pub total: usize,
}

// serialized form; `percent` is written for readers and ignored on input
#[derive(Serialize, Deserialize)]
struct RateRepr {
    count: usize,
    total: usize,
    #[serde(default)]
    percent: f64,
}

impl From<Rate> for RateRepr {
    fn from(r: Rate) -> Self {
        RateRepr {
            count: r.count,
            total: r.total,
            percent: r.percent(),
        }
    }
}

impl From<RateRepr> for Rate {
    fn from(r: RateRepr) -> Self {
        Rate::new(r.count, r.total)
    }
}

impl Rate {
    pub fn new(count: usize, total: usize) -> Self {
        Rate { count, total }
    }

    pub fn fraction(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count as f64 / self.total as f64
        }
    }

    /// Percentage at one decimal.
    pub fn percent(self) -> f64 {
        round1(self.fraction() * 100.0)
    }

    /// Signed percentage-point difference to `base`, at one decimal.
    pub fn delta(self, base: Rate) -> f64 {
        round1(100.0 * (self.fraction() - base.fraction()))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}%", self.percent())
    }
}

pub fn format_delta(d: f64) -> String {
    format!("{:+.1}%", round1(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "NO")]
    No,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ok => "OK",
            Label::No => "NO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualLabel {
    pub entry_id: String,
    pub level: Level,
    pub config: Variant,
    pub label: Label,
}

type RunId = (String, Level, Variant);

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("scope `{0}` selects no records")]
    EmptyScope(String),
    #[error("no baseline summary; the ablation table needs one")]
    MissingBaseline,
    #[error("duplicate label for {entry_id} {level} {config}")]
    DuplicateLabel {
        entry_id: String,
        level: Level,
        config: Variant,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no run records under {0}")]
    NoRecords(PathBuf),
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn open(path: &Path) -> Result<std::fs::File, ReportError> {
    std::fs::File::open(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Manual labels, at most one per (entry, level, config).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    labels: BTreeMap<RunId, Label>,
}

impl LabelSet {
    pub fn new<I: IntoIterator<Item = ManualLabel>>(labels: I) -> Result<Self, ReportError> {
        let mut set = LabelSet::default();
        for l in labels {
            let key = (l.entry_id.clone(), l.level, l.config);
            if set.labels.insert(key, l.label).is_some() {
                return Err(ReportError::DuplicateLabel {
                    entry_id: l.entry_id,
                    level: l.level,
                    config: l.config,
                });
            }
        }
        Ok(set)
    }

    /// Reads CSV with header `entry_id,level,config,label`.
    pub fn from_csv(path: &Path) -> Result<Self, ReportError> {
        let csv_err = |source| ReportError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let rows: Vec<ManualLabel> = csv_reader(open(path)?)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(csv_err)?;
        Self::new(rows)
    }

    pub fn get(&self, entry_id: &str, level: Level, config: Variant) -> Option<Label> {
        self.labels.get(&(entry_id.to_string(), level, config)).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_ok(&self, r: &RunRecord) -> bool {
        self.get(&r.entry_id, r.level, r.config) == Some(Label::Ok)
    }
}

/// Runs whose syntactic success is left out of the syntactic count (they
/// still count in every denominator).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Exclusions {
    runs: BTreeSet<(String, Level, Option<Variant>)>,
}

#[derive(Debug, Deserialize)]
struct ExclusionRow {
    entry_id: String,
    level: Level,
    #[serde(default)]
    config: Option<Variant>,
}

impl Exclusions {
    /// `config: None` matches every config.
    pub fn new<I: IntoIterator<Item = (String, Level, Option<Variant>)>>(runs: I) -> Self {
        Exclusions {
            runs: runs.into_iter().collect(),
        }
    }

    /// Reads CSV with header `entry_id,level,config`; `config` may be blank.
    pub fn from_csv(path: &Path) -> Result<Self, ReportError> {
        let rows: Vec<ExclusionRow> = csv_reader(open(path)?)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|source| ReportError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self::new(rows.into_iter().map(|r| (r.entry_id, r.level, r.config))))
    }

    pub fn contains(&self, r: &RunRecord) -> bool {
        self.runs.contains(&(r.entry_id.clone(), r.level, None))
            || self.runs.contains(&(r.entry_id.clone(), r.level, Some(r.config)))
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

/// Entry id to CWE, read from CSV with header `entry_id,cwe_id`.
pub fn load_cwe_map(path: &Path) -> Result<BTreeMap<String, String>, ReportError> {
    #[derive(Deserialize)]
    struct Row {
        entry_id: String,
        cwe_id: String,
    }
    let rows: Vec<Row> = csv_reader(open(path)?)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| ReportError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(rows.into_iter().map(|r| (r.entry_id, cwe_group(Some(&r.cwe_id)).to_string())).collect())
}

/// Which records a summary covers. Unset filters match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe_group: Option<String>,
}

impl Scope {
    pub fn all() -> Self {
        Scope::default()
    }

    pub fn level(level: Level) -> Self {
        Scope {
            level: Some(level),
            ..Scope::default()
        }
    }

    pub fn config(config: Variant) -> Self {
        Scope {
            config: Some(config),
            ..Scope::default()
        }
    }

    pub fn matches(&self, r: &RunRecord, cwe_map: Option<&BTreeMap<String, String>>) -> bool {
        self.level.is_none_or(|l| l == r.level)
            && self.config.is_none_or(|c| c == r.config)
            && self.cwe_group.as_deref().is_none_or(|g| record_cwe(r, cwe_map) == g)
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(c) = self.config {
            parts.push(c.to_string());
        }
        if let Some(l) = self.level {
            parts.push(l.to_string());
        }
        if let Some(g) = &self.cwe_group {
            parts.push(g.clone());
        }
        if parts.is_empty() {
            f.write_str("all")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

/// CWE group of a record: the map's value, else the record's own tag.
pub fn record_cwe<'a>(r: &'a RunRecord, cwe_map: Option<&'a BTreeMap<String, String>>) -> &'a str {
    match cwe_map.and_then(|m| m.get(&r.entry_id)) {
        Some(c) => cwe_group(Some(c)),
        None => cwe_group(r.cwe_id.as_deref()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scope: Scope,
    pub total: usize,
    pub syntactic_ok: Rate,
    pub semantic_ok: Rate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usable: Option<Rate>,
}

/// Counts over the records selected by `scope`. `usable` is present only
/// when labels are given; a record without a label counts as not usable.
pub fn summarize(
    records: &[RunRecord],
    labels: Option<&LabelSet>,
    exclusions: &Exclusions,
    scope: &Scope,
    cwe_map: Option<&BTreeMap<String, String>>,
) -> Result<MetricsSummary, ReportError> {
    let flags = par::map(records, |r| {
        if !scope.matches(r, cwe_map) {
            return None;
        }
        let syn = syntactic_correct(r) && !exclusions.contains(r);
        let sem = semantic_correct(r);
        let ok = labels.is_some_and(|l| l.is_ok(r));
        Some((syn, sem, ok))
    });
    let selected: Vec<(bool, bool, bool)> = flags.into_iter().flatten().collect();
    let total = selected.len();
    if total == 0 {
        return Err(ReportError::EmptyScope(scope.to_string()));
    }
    let count = |f: fn(&(bool, bool, bool)) -> bool| selected.iter().filter(|x| f(x)).count();
    Ok(MetricsSummary {
        scope: scope.clone(),
        total,
        syntactic_ok: Rate::new(count(|x| x.0), total),
        semantic_ok: Rate::new(count(|x| x.1), total),
        usable: labels.map(|_| Rate::new(count(|x| x.2), total)),
    })
}

/// Natural order for ids like `VUL4J-9` < `VUL4J-10`.
pub fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    fn split(s: &str) -> Vec<Result<u64, &str>> {
        let mut out = Vec::new();
        let mut rest = s;
        while !rest.is_empty() {
            let digits = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            if digits > 0 {
                out.push(rest[..digits].parse::<u64>().map_err(|_| &rest[..digits]));
                rest = &rest[digits..];
            } else {
                let text = rest.len() - rest.trim_start_matches(|c: char| !c.is_ascii_digit()).len();
                out.push(Err(&rest[..text]));
                rest = &rest[text..];
            }
        }
        out
    }
    fn key<'a>(p: &Result<u64, &'a str>) -> (u8, u64, &'a str) {
        match p {
            Ok(n) => (0, *n, ""),
            Err(s) => (1, 0, s),
        }
    }
    let (sa, sb) = (split(a), split(b));
    sa.iter().map(key).cmp(sb.iter().map(key)).then_with(|| a.cmp(b))
}
