//! Verdicts over a hand-labelled set of Maven and Gradle logs.

mod common;

use witgen::harness::{classify_log, ExecutionLog, OutcomeFlag, TestOutcome};
use witgen::manifest::Version;

pub fn classify(case: &common::LabelledLog, version: Version, duration_secs: f64) -> TestOutcome {
    classify_log(&ExecutionLog {
        stdout: common::read(&case.file),
        stderr: String::new(),
        exit_code: case.exit_code,
        duration_secs,
        version,
        timed_out: case.timed_out,
    })
}

fn flag_names(o: &TestOutcome) -> Vec<String> {
    let mut names: Vec<String> = o
        .notes
        .iter()
        .map(|f: &OutcomeFlag| serde_json::to_value(f).unwrap().as_str().unwrap().to_string())
        .collect();
    names.sort();
    names
}

#[test]
fn every_labelled_log_matches() {
    let corpus = common::log_corpus();
    assert_eq!(corpus.len(), 16);
    let mut wrong = Vec::new();
    for case in &corpus {
        let o = classify(case, Version::Before, 12.0);
        let mut want = case.flags.clone();
        want.sort();
        if (o.verdict, o.tests_run, flag_names(&o)) != (case.verdict, case.tests_run, want) {
            wrong.push(format!("{}: got {:?}", case.file.display(), o));
        }
    }
    assert!(wrong.is_empty(), "misclassified:\n{}", wrong.join("\n"));
}

#[test]
fn outcome_ignores_version_and_duration() {
    for case in common::log_corpus() {
        assert_eq!(classify(&case, Version::Before, 0.5), classify(&case, Version::After, 900.0));
    }
}
