use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use walkdir::WalkDir;

use super::tables::config_summaries;
use super::{
    ablation_table, classify_failure, cwe_table, emit_results_table, natural_cmp, summarize, Exclusions,
    FailureCategory, Format, LabelSet, MetricsSummary, ReportError, Scope, Table,
};
use crate::feedback::RunRecord;
use crate::focal::Level;
use crate::prompt::Variant;

/// Reads every `*.json` run record below `runs_dir`, ordered by config,
/// level and entry id.
pub fn load_records(runs_dir: &Path) -> Result<Vec<RunRecord>, ReportError> {
    let mut records = Vec::new();
    for e in WalkDir::new(runs_dir).sort_by_file_name() {
        let e = e.map_err(|err| ReportError::Input {
            path: runs_dir.to_path_buf(),
            message: err.to_string(),
        })?;
        if !e.file_type().is_file() || e.path().extension().is_none_or(|x| x != "json") {
            continue;
        }
        let text = fs::read_to_string(e.path()).map_err(|source| ReportError::Io {
            path: e.path().to_path_buf(),
            source,
        })?;
        let r: RunRecord = serde_json::from_str(&text).map_err(|err| ReportError::Input {
            path: e.path().to_path_buf(),
            message: err.to_string(),
        })?;
        records.push(r);
    }
    if records.is_empty() {
        return Err(ReportError::NoRecords(runs_dir.to_path_buf()));
    }
    records.sort_by(|a, b| {
        (a.config, a.level)
            .cmp(&(b.config, b.level))
            .then_with(|| natural_cmp(&a.entry_id, &b.entry_id))
    });
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct BundleInputs {
    pub records: Vec<RunRecord>,
    pub labels: Option<LabelSet>,
    pub exclusions: Exclusions,
    pub cwe_map: Option<BTreeMap<String, String>>,
    pub min_group: usize,
    pub format: Format,
    /// Root the records' log references are relative to; failure tagging
    /// runs without logs when unset.
    pub log_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    pub entry_id: String,
    pub level: Level,
    pub config: Variant,
    pub category: FailureCategory,
    pub evidence: String,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct BundleSummary {
    pub records: usize,
    pub overall: MetricsSummary,
    pub per_level: BTreeMap<Level, MetricsSummary>,
    pub per_config: BTreeMap<Variant, MetricsSummary>,
    pub failure_counts: BTreeMap<FailureCategory, usize>,
    pub notices: Vec<String>,
}

fn best_logs(record: &RunRecord, root: &Path) -> Option<String> {
    let refs = record.best()?.logs.as_ref()?;
    let mut text = String::new();
    for rel in [&refs.before, &refs.after] {
        if let Ok(t) = fs::read_to_string(root.join(rel)) {
            text += &t;
            text.push('\n');
        }
    }
    (!text.is_empty()).then_some(text)
}

fn write(path: PathBuf, text: &str) -> Result<(), ReportError> {
    fs::write(&path, text).map_err(|source| ReportError::Io { path, source })
}

/// Writes the report files into `out_dir` and returns the summary. Output
/// depends only on the inputs, so reruns are byte-identical.
pub fn write_bundle(inputs: &BundleInputs, out_dir: &Path) -> Result<BundleSummary, ReportError> {
    let records = &inputs.records;
    if records.is_empty() {
        return Err(ReportError::NoRecords(out_dir.to_path_buf()));
    }
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let labels = inputs.labels.as_ref();
    let ex = &inputs.exclusions;
    let cwe_map = inputs.cwe_map.as_ref();
    let ext = inputs.format.extension();
    let mut notices = Vec::new();
    if labels.is_none() {
        notices.push("no manual labels given; usability omitted".to_string());
    }

    let per_config = config_summaries(records, labels, ex);
    for config in per_config.keys() {
        let mut t = emit_results_table(records, labels, *config);
        t.notices = notices.clone();
        let name = match config {
            Variant::Baseline => format!("table1.{ext}"),
            other => format!("table1.{other}.{ext}"),
        };
        write(out_dir.join(name), &t.render(inputs.format))?;
    }

    let ablation = match ablation_table(&per_config) {
        Ok(a) => a.table(),
        Err(e) => {
            notices.push(e.to_string());
            let mut t = Table::new("Prompt configurations", vec!["Config".into()]);
            t.notices.push(e.to_string());
            t
        }
    };
    write(out_dir.join(format!("ablation.{ext}")), &ablation.render(inputs.format))?;

    // CWE grouping is reported for the baseline prompt when it was run
    let cwe_records: Vec<RunRecord> = if per_config.contains_key(&Variant::Baseline) {
        records.iter().filter(|r| r.config == Variant::Baseline).cloned().collect()
    } else {
        records.clone()
    };
    let mut cwe = cwe_table(&cwe_records, labels, ex, cwe_map, inputs.min_group)?.table();
    cwe.notices.extend(notices.iter().cloned());
    write(out_dir.join(format!("cwe.{ext}")), &cwe.render(inputs.format))?;

    let failures: Vec<FailureRow> = crate::par::map(records, |r| {
        let log = inputs.log_root.as_deref().and_then(|root| best_logs(r, root));
        classify_failure(r, log.as_deref()).map(|p| FailureRow {
            entry_id: r.entry_id.clone(),
            level: r.level,
            config: r.config,
            category: p.category,
            evidence: p.evidence,
        })
    })
    .into_iter()
    .flatten()
    .collect();
    let mut failure_counts: BTreeMap<FailureCategory, usize> = BTreeMap::new();
    let mut ft = Table::new(
        "Failure patterns",
        ["Entry", "Level", "Config", "Category", "Evidence"].map(String::from).to_vec(),
    );
    for f in &failures {
        *failure_counts.entry(f.category).or_default() += 1;
        ft.rows.push(vec![
            f.entry_id.clone(),
            f.level.to_string(),
            f.config.to_string(),
            f.category.to_string(),
            f.evidence.replace('|', "\\|"),
        ]);
    }
    ft.notices = failure_counts.iter().map(|(c, n)| format!("{c}: {n}")).collect();
    write(out_dir.join(format!("failures.{ext}")), &ft.render(inputs.format))?;

    let mut per_level = BTreeMap::new();
    for level in Level::ALL {
        if let Ok(s) = summarize(records, labels, ex, &Scope::level(level), cwe_map) {
            per_level.insert(level, s);
        }
    }
    let summary = BundleSummary {
        records: records.len(),
        overall: summarize(records, labels, ex, &Scope::all(), cwe_map)?,
        per_level,
        per_config,
        failure_counts,
        notices,
    };
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| ReportError::Input {
        path: out_dir.join("summary.json"),
        message: e.to_string(),
    })?;
    json.push('\n');
    write(out_dir.join("summary.json"), &json)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Verdict::{self, Fail, Pass};
    use crate::report::testing::record;

    fn inputs(records: Vec<RunRecord>) -> BundleInputs {
        BundleInputs {
            records,
            labels: None,
            exclusions: Exclusions::default(),
            cwe_map: None,
            min_group: 1,
            format: Format::Markdown,
            log_root: None,
        }
    }

    #[test]
    fn bundle_files_and_idempotence() {
        let recs = vec![
            record("A", Level::L0, Variant::Baseline, Fail, Pass),
            record("B", Level::L0, Variant::Baseline, Verdict::Err, Verdict::Err),
            record("A", Level::L0, Variant::NoRole, Pass, Pass),
        ];
        let dir = tempfile::tempdir().unwrap();
        let s = write_bundle(&inputs(recs.clone()), dir.path()).unwrap();
        assert_eq!(s.overall.semantic_ok.count, 1);
        assert_eq!(s.overall.usable, None);
        assert!(s.notices[0].contains("usability omitted"));
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(
            names,
            ["ablation.md", "cwe.md", "failures.md", "summary.json", "table1.md", "table1.no_role.md"]
        );
        let first = fs::read(dir.path().join("summary.json")).unwrap();
        write_bundle(&inputs(recs), dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("summary.json")).unwrap());
    }

    #[test]
    fn empty_runs_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_records(dir.path()), Err(ReportError::NoRecords(_))));
    }
}
