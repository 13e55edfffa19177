//! Heuristic tagging of runs that did not produce a witness. The tags are
//! advisory; every one carries the line that triggered it.

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::semantic_correct;
use crate::feedback::RunRecord;
use crate::harness::OutcomeFlag;
use crate::java::{self, normalize_type, MemberKind, TypeDecl};
use crate::manifest::MethodLocator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    ImportError,
    UndetectedTest,
    MistargetedTest,
    MisusedCall,
    VisibilityError,
    VersionError,
    Other,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 7] = [
        FailureCategory::ImportError,
        FailureCategory::UndetectedTest,
        FailureCategory::MistargetedTest,
        FailureCategory::MisusedCall,
        FailureCategory::VisibilityError,
        FailureCategory::VersionError,
        FailureCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::ImportError => "import_error",
            FailureCategory::UndetectedTest => "undetected_test",
            FailureCategory::MistargetedTest => "mistargeted_test",
            FailureCategory::MisusedCall => "misused_call",
            FailureCategory::VisibilityError => "visibility_error",
            FailureCategory::VersionError => "version_error",
            FailureCategory::Other => "other",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePattern {
    pub category: FailureCategory,
    pub evidence: String,
}

const EVIDENCE_CHARS: usize = 200;

fn evidence(line: &str) -> String {
    line.trim().chars().take(EVIDENCE_CHARS).collect()
}

const MISUSED_CALL: &[&str] = &[
    "cannot be applied to",
    "no suitable method found",
    "no suitable constructor found",
    "actual and formal argument lists differ",
    "unreported exception",
];

const VISIBILITY: &[&str] = &[
    "has private access",
    "has protected access",
    "is not public in",
    "cannot be accessed from outside package",
];

const VERSION: &[&str] = &[
    "use -source",
    "-source ",
    "preview feature",
    "invalid target release",
    "invalid source release",
    "wrong version",
    "not supported in -source",
];

fn find_line<'a>(log: &'a str, needles: &[&str]) -> Option<&'a str> {
    log.lines().find(|l| needles.iter().any(|n| l.contains(n)))
}

/// Line number (1-based) a compiler diagnostic points at, in either the
/// `File.java:[12,5]` or the `File.java:12:` form.
fn diagnostic_line(line: &str) -> Option<usize> {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\.java:(?:\[(\d+),\d+\]|(\d+):)").expect("static regex"));
    let caps = re.captures(line)?;
    caps.get(1).or_else(|| caps.get(2))?.as_str().parse().ok()
}

fn import_error<'a>(log: &'a str, code: Option<&str>) -> Option<&'a str> {
    let lines: Vec<&str> = log.lines().collect();
    for (i, l) in lines.iter().enumerate() {
        if l.contains("does not exist") && l.contains("package ") {
            return Some(l);
        }
        if l.contains("cannot find symbol") {
            let next = lines.iter().skip(i + 1).take(2);
            if next.clone().any(|n| {
                let body = n.trim().trim_start_matches("[ERROR]").trim();
                body.starts_with("symbol:") && body.contains("class ")
            }) {
                return Some(l);
            }
        }
        if let (Some(n), Some(code)) = (diagnostic_line(l), code) {
            if l.contains("error") || l.contains("ERROR") {
                let pointed = code.lines().nth(n.saturating_sub(1)).unwrap_or("");
                if pointed.trim_start().starts_with("import ") {
                    return Some(l);
                }
            }
        }
    }
    None
}

fn declares_method(types: &[TypeDecl], locator: &MethodLocator) -> bool {
    let wanted: Option<Vec<String>> =
        locator.parameter_types.as_ref().map(|ps| ps.iter().map(|p| normalize_type(p)).collect());
    types.iter().any(|t| {
        t.members.iter().any(|m| {
            let hit = m.kind == MemberKind::Method
                && m.name == locator.method_name
                && wanted.as_ref().is_none_or(|w| {
                    m.param_types.iter().map(|p| normalize_type(p)).collect::<Vec<_>>() == *w
                });
            hit || m.nested.as_deref().is_some_and(|n| declares_method(std::slice::from_ref(n), locator))
        })
    })
}

fn redefines_focal(code: &str, locator: &MethodLocator) -> bool {
    java::parse(code).is_ok_and(|unit| declares_method(&unit.types, locator))
}

/// Tags a run that is not semantically correct. `log` is the text of the
/// best iteration's build logs, when available. Returns `None` for witnesses.
pub fn classify_failure(record: &RunRecord, log: Option<&str>) -> Option<FailurePattern> {
    if semantic_correct(record) {
        return None;
    }
    let tag = |category, ev: &str| {
        Some(FailurePattern {
            category,
            evidence: evidence(ev),
        })
    };
    let best = record.best();
    let code = best.and_then(|b| b.extracted_code.as_deref());
    let log = log.unwrap_or("");

    if let Some(l) = import_error(log, code) {
        return tag(FailureCategory::ImportError, l);
    }
    let zero = |o: Option<&crate::harness::TestOutcome>| o.is_some_and(|o| o.has(OutcomeFlag::ZeroTestsRun));
    if best.is_some_and(|b| zero(b.before_outcome.as_ref()) && zero(b.after_outcome.as_ref())) {
        return tag(FailureCategory::UndetectedTest, "zero tests run on both versions");
    }
    if let (Some(code), Some(loc)) = (code, &record.focal_method) {
        if redefines_focal(code, loc) {
            return tag(FailureCategory::MistargetedTest, &format!("test code declares {loc}"));
        }
    }
    for (category, needles) in [
        (FailureCategory::MisusedCall, MISUSED_CALL),
        (FailureCategory::VisibilityError, VISIBILITY),
        (FailureCategory::VersionError, VERSION),
    ] {
        if let Some(l) = find_line(log, needles) {
            return tag(category, l);
        }
    }
    let fallback = match best {
        None => "no executed generation",
        Some(_) => log.lines().find(|l| l.contains("ERROR") || l.contains("FAIL")).unwrap_or(""),
    };
    tag(FailureCategory::Other, fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{IterationRecord, PromptKind};
    use crate::focal::Level;
    use crate::harness::{TestOutcome, Verdict};
    use crate::prompt::Variant;
    use crate::report::testing::record;

    fn with_best(before: TestOutcome, after: TestOutcome, code: &str) -> RunRecord {
        let mut r = record("E", Level::L0, Variant::Baseline, before.verdict, after.verdict);
        r.focal_method = Some(MethodLocator {
            class_name: "org.x.Parser".into(),
            method_name: "parse".into(),
            parameter_types: Some(vec!["String".into()]),
        });
        r.iterations.push(IterationRecord {
            ordinal: 1,
            prompt_kind: PromptKind::Initial,
            extracted_code: Some(code.into()),
            test_class: None,
            before_outcome: Some(before),
            after_outcome: Some(after),
            logs: None,
            notes: vec![],
        });
        r.best_iteration = Some(1);
        r
    }

    fn err() -> TestOutcome {
        TestOutcome::new(Verdict::Err)
    }

    #[test]
    fn witness_is_not_tagged() {
        let r = with_best(TestOutcome::new(Verdict::Fail), TestOutcome::new(Verdict::Pass), "class T {}");
        assert_eq!(classify_failure(&r, None), None);
    }

    #[test]
    fn missing_package_is_import_error() {
        let r = with_best(err(), err(), "import org.nope.Thing;\nclass T {}");
        let log = "[ERROR] /w/src/test/java/T.java:[1,15] package org.nope does not exist\n";
        let p = classify_failure(&r, Some(log)).unwrap();
        assert_eq!(p.category, FailureCategory::ImportError);
        assert!(p.evidence.contains("org.nope"));
    }

    #[test]
    fn missing_class_symbol_is_import_error() {
        let r = with_best(err(), err(), "class T {}");
        let log = "[ERROR] T.java:[5,9] cannot find symbol\n[ERROR]   symbol:   class StringReader\n[ERROR]   location: class T\n";
        assert_eq!(classify_failure(&r, Some(log)).unwrap().category, FailureCategory::ImportError);
        let var = "[ERROR] T.java:[5,9] cannot find symbol\n[ERROR]   symbol:   variable x\n";
        assert_eq!(classify_failure(&r, Some(var)).unwrap().category, FailureCategory::Other);
    }

    #[test]
    fn zero_tests_on_both_is_undetected() {
        let mut z = TestOutcome::new(Verdict::Pass);
        z.tests_run = 0;
        z.notes.insert(OutcomeFlag::ZeroTestsRun);
        let r = with_best(z.clone(), z, "class T {}");
        assert_eq!(classify_failure(&r, Some("BUILD SUCCESS")).unwrap().category, FailureCategory::UndetectedTest);
    }

    #[test]
    fn redefined_focal_method_is_mistargeted() {
        let code = "class ParserTest {\n  String parse(String s) { return s; }\n  @Test void t() { parse(\"x\"); }\n}";
        let r = with_best(TestOutcome::new(Verdict::Pass), TestOutcome::new(Verdict::Pass), code);
        assert_eq!(classify_failure(&r, None).unwrap().category, FailureCategory::MistargetedTest);
        // same name, other parameters: not the focal method
        let code = "class ParserTest {\n  String parse(int s) { return null; }\n}";
        let r = with_best(TestOutcome::new(Verdict::Pass), TestOutcome::new(Verdict::Pass), code);
        assert_eq!(classify_failure(&r, None).unwrap().category, FailureCategory::Other);
    }

    #[test]
    fn compiler_message_categories() {
        let r = with_best(err(), err(), "class T {}");
        let cases = [
            ("method parse in class Parser cannot be applied to given types;", FailureCategory::MisusedCall),
            ("unreported exception java.io.IOException; must be caught", FailureCategory::MisusedCall),
            ("Parser(int) has private access in org.x.Parser", FailureCategory::VisibilityError),
            ("text blocks are a preview feature and are disabled by default.", FailureCategory::VersionError),
            ("something else entirely", FailureCategory::Other),
        ];
        for (line, want) in cases {
            let log = format!("[ERROR] /w/T.java:[7,3] {line}\n");
            assert_eq!(classify_failure(&r, Some(&log)).unwrap().category, want, "{line}");
        }
    }

    #[test]
    fn error_pointing_at_import_line() {
        let r = with_best(err(), err(), "package p;\nimport a.b.C;\nclass T {}");
        let log = "T.java:2: error: cannot access C\n";
        assert_eq!(classify_failure(&r, Some(log)).unwrap().category, FailureCategory::ImportError);
    }
}
