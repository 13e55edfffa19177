use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    format_delta, natural_cmp, record_cwe, summarize, Exclusions, LabelSet, MetricsSummary, Rate, ReportError,
    Scope,
};
use crate::feedback::RunRecord;
use crate::focal::Level;
use crate::manifest::NOT_MAPPING;
use crate::prompt::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Markdown,
    Csv,
    Text,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Text => "txt",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            "text" | "txt" => Ok(Format::Text),
            _ => Err(format!("unknown format `{s}` (expected md, csv, text)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Markdown => "markdown",
            Format::Csv => "csv",
            Format::Text => "text",
        })
    }
}

/// A rendered-on-demand table of strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notices: Vec<String>,
}

impl Table {
    pub fn new(title: impl Into<String>, header: Vec<String>) -> Self {
        Table {
            title: title.into(),
            header,
            rows: Vec::new(),
            notices: Vec::new(),
        }
    }

    /// Cell at `row`, by column name.
    pub fn cell(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.header.iter().position(|h| h == column)?;
        self.rows.get(row)?.get(c).map(String::as_str)
    }

    /// Index of the first row whose first cell is `key`.
    pub fn row_index(&self, key: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.first().is_some_and(|c| c == key))
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Markdown => self.markdown(),
            Format::Csv => self.csv(),
            Format::Text => self.text(),
        }
    }

    fn markdown(&self) -> String {
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        let mut out = format!("## {}\n\n", self.title);
        out += &line(&self.header);
        out += &line(&vec!["---".to_string(); self.header.len()]);
        for r in &self.rows {
            out += &line(r);
        }
        for n in &self.notices {
            out += &format!("\nNote: {n}\n");
        }
        out
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // writing to memory cannot fail
        let _ = w.write_record(&self.header);
        for r in &self.rows {
            let _ = w.write_record(r);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }

    fn text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            format!("{}\n", padded.join("  ").trim_end())
        };
        let mut out = format!("{}\n\n", self.title);
        out += &line(&self.header);
        out += &line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
        for r in &self.rows {
            out += &line(r);
        }
        for n in &self.notices {
            out += &format!("\nNote: {n}\n");
        }
        out
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AblationRow {
    pub config: Variant,
    pub syntactic_ok: Rate,
    pub semantic_ok: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub notices: Vec<String>,
}

impl AblationTable {
    pub fn row(&self, config: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.config == config)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new("Prompt configurations", strings(&["Config", "Syntactically correct", "Semantically correct"]));
        for r in &self.rows {
            t.rows.push(vec![r.config.to_string(), r.syntactic_ok.to_string(), r.semantic_ok.to_string()]);
        }
        t.notices = self.notices.clone();
        t
    }
}

/// One row per prompt config, in the fixed config order. A config without a
/// summary is left out with a notice; baseline is required.
pub fn ablation_table(summaries: &BTreeMap<Variant, MetricsSummary>) -> Result<AblationTable, ReportError> {
    if !summaries.contains_key(&Variant::Baseline) {
        return Err(ReportError::MissingBaseline);
    }
    let mut table = AblationTable {
        rows: Vec::new(),
        notices: Vec::new(),
    };
    for config in Variant::ALL {
        match summaries.get(&config) {
            Some(s) => table.rows.push(AblationRow {
                config,
                syntactic_ok: s.syntactic_ok,
                semantic_ok: s.semantic_ok,
            }),
            None => table.notices.push(format!("no runs for config {config}; row omitted")),
        }
    }
    Ok(table)
}

/// Per-config summaries over all records of each config present.
pub fn config_summaries(
    records: &[RunRecord],
    labels: Option<&LabelSet>,
    exclusions: &Exclusions,
) -> BTreeMap<Variant, MetricsSummary> {
    let present: BTreeSet<Variant> = records.iter().map(|r| r.config).collect();
    present
        .into_iter()
        .filter_map(|c| summarize(records, labels, exclusions, &Scope::config(c), None).ok().map(|s| (c, s)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CweRow {
    pub group: String,
    /// Distinct entries in the group.
    pub entries: usize,
    pub syntactic_ok: Rate,
    pub semantic_ok: Rate,
    pub usable: Option<Rate>,
    /// Percentage-point differences to the average row; `None` on the
    /// average row itself.
    pub deltas: Option<[Option<f64>; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CweTable {
    pub average: CweRow,
    pub rows: Vec<CweRow>,
    pub notices: Vec<String>,
}

pub const AVERAGE: &str = "Average";
pub const DEFAULT_MIN_GROUP: usize = 4;

impl CweTable {
    pub fn row(&self, group: &str) -> Option<&CweRow> {
        if group == AVERAGE {
            return Some(&self.average);
        }
        self.rows.iter().find(|r| r.group == group)
    }

    pub fn table(&self) -> Table {
        let with_usable = self.average.usable.is_some();
        let mut header = strings(&["CWE", "Entries", "Syntactic", "Δ", "Semantic", "Δ"]);
        if with_usable {
            header.extend(strings(&["Usable", "Δ"]));
        }
        let mut t = Table::new("Results by CWE", header);
        for r in std::iter::once(&self.average).chain(&self.rows) {
            let d = |i: usize| {
                r.deltas
                    .and_then(|d| d[i])
                    .map(format_delta)
                    .unwrap_or_default()
            };
            let mut cells = vec![
                r.group.clone(),
                r.entries.to_string(),
                r.syntactic_ok.to_string(),
                d(0),
                r.semantic_ok.to_string(),
                d(1),
            ];
            if with_usable {
                cells.push(r.usable.map(|u| u.to_string()).unwrap_or_default());
                cells.push(d(2));
            }
            t.rows.push(cells);
        }
        t.notices = self.notices.clone();
        t
    }
}

fn group_order(a: &str, b: &str) -> std::cmp::Ordering {
    (a == NOT_MAPPING).cmp(&(b == NOT_MAPPING)).then_with(|| natural_cmp(a, b))
}

/// Rates per CWE group with differences to the all-records average. Groups
/// with fewer than `min_group` entries are dropped (with a notice) but still
/// count toward the average.
pub fn cwe_table(
    records: &[RunRecord],
    labels: Option<&LabelSet>,
    exclusions: &Exclusions,
    cwe_map: Option<&BTreeMap<String, String>>,
    min_group: usize,
) -> Result<CweTable, ReportError> {
    let min_group = min_group.max(1);
    let whole = summarize(records, labels, exclusions, &Scope::all(), cwe_map)?;
    let mut groups: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        groups.entry(record_cwe(r, cwe_map)).or_default().insert(&r.entry_id);
    }
    let all_entries: BTreeSet<&str> = records.iter().map(|r| r.entry_id.as_str()).collect();
    let average = CweRow {
        group: AVERAGE.into(),
        entries: all_entries.len(),
        syntactic_ok: whole.syntactic_ok,
        semantic_ok: whole.semantic_ok,
        usable: whole.usable,
        deltas: None,
    };

    let mut names: Vec<&str> = groups.keys().copied().collect();
    names.sort_by(|a, b| group_order(a, b));
    let mut rows = Vec::new();
    let mut notices = Vec::new();
    for name in names {
        let entries = groups[name].len();
        if entries < min_group {
            let noun = if entries == 1 { "entry" } else { "entries" };
            notices.push(format!("{name} left out: {entries} {noun}, fewer than {min_group}"));
            continue;
        }
        let scope = Scope {
            cwe_group: Some(name.to_string()),
            ..Scope::default()
        };
        let s = summarize(records, labels, exclusions, &scope, cwe_map)?;
        let usable_delta = s.usable.zip(average.usable).map(|(u, a)| u.delta(a));
        rows.push(CweRow {
            group: name.to_string(),
            entries,
            syntactic_ok: s.syntactic_ok,
            semantic_ok: s.semantic_ok,
            usable: s.usable,
            deltas: Some([
                Some(s.syntactic_ok.delta(average.syntactic_ok)),
                Some(s.semantic_ok.delta(average.semantic_ok)),
                usable_delta,
            ]),
        });
    }
    Ok(CweTable { average, rows, notices })
}

/// Before/After/Manual per entry and level for one config. Missing runs and
/// labels show as `-`; without labels the Manual columns are left out.
pub fn emit_results_table(records: &[RunRecord], labels: Option<&LabelSet>, config: Variant) -> Table {
    let mut header = vec!["Entry".to_string()];
    for l in Level::ALL {
        header.push(format!("{l} Before"));
        header.push(format!("{l} After"));
        if labels.is_some() {
            header.push(format!("{l} Manual"));
        }
    }
    let mut t = Table::new(format!("Results per entry ({config})"), header);
    let mut by_run: BTreeMap<(&str, Level), &RunRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.config == config) {
        by_run.insert((&r.entry_id, r.level), r);
    }
    let mut ids: Vec<&str> = by_run.keys().map(|(e, _)| *e).collect::<BTreeSet<_>>().into_iter().collect();
    ids.sort_by(|a, b| natural_cmp(a, b));
    for id in ids {
        let mut row = vec![id.to_string()];
        for l in Level::ALL {
            match by_run.get(&(id, l)) {
                Some(r) => {
                    row.push(r.final_pair.before.to_string());
                    row.push(r.final_pair.after.to_string());
                }
                None => row.extend(["-".to_string(), "-".to_string()]),
            }
            if let Some(labels) = labels {
                row.push(labels.get(id, l, config).map_or("-", super::Label::as_str).to_string());
            }
        }
        t.rows.push(row);
    }
    t
}
