//! Build-log classification into PASS / FAIL / ERR.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ExecutionLog, OutcomeFlag, TestOutcome, Verdict};

/// Log markers of one build tool. The default set covers Maven/Surefire and
/// the usual Gradle wording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkerConfig {
    /// Any of these substrings means the test (or the project) did not compile.
    pub compile_failure: Vec<String>,
    /// Regexes over the test summary. Named groups: `run` (required),
    /// `failures` and `errors` (optional). The last match in the log wins.
    pub summary: Vec<String>,
    pub build_success: Vec<String>,
    pub build_failure: Vec<String>,
    /// The runner found nothing it recognized as a test.
    pub no_tests: Vec<String>,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        MarkerConfig {
            compile_failure: s(&[
                "COMPILATION ERROR",
                "Compilation failure",
                "compileTestJava FAILED",
                "compileJava FAILED",
                "Compilation failed",
            ]),
            summary: s(&[
                r"Tests run:\s*(?P<run>\d+),\s*Failures:\s*(?P<failures>\d+),\s*Errors:\s*(?P<errors>\d+)",
                r"(?P<run>\d+) tests? completed(?:, (?P<failures>\d+) failed)?",
            ]),
            build_success: s(&["BUILD SUCCESS"]),
            build_failure: s(&["BUILD FAILURE", "BUILD FAILED"]),
            no_tests: s(&["No tests were executed", "No tests to run", "No tests found"]),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid summary pattern `{pattern}`: {source}")]
pub struct MarkerError {
    pattern: String,
    #[source]
    source: regex::Error,
}

/// A [`MarkerConfig`] with its regexes compiled.
#[derive(Debug, Clone)]
pub struct LogClassifier {
    markers: MarkerConfig,
    summary: Vec<Regex>,
}

impl Default for LogClassifier {
    fn default() -> Self {
        LogClassifier::new(MarkerConfig::default()).expect("default markers compile")
    }
}

struct Summary {
    run: u32,
    failed: u32,
    at: usize,
}

fn group(c: &regex::Captures<'_>, name: &str) -> u32 {
    c.name(name).and_then(|m| m.as_str().parse().ok()).unwrap_or(0)
}

impl LogClassifier {
    pub fn new(markers: MarkerConfig) -> Result<Self, MarkerError> {
        let summary = markers
            .summary
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|source| MarkerError {
                    pattern: p.clone(),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(LogClassifier { markers, summary })
    }

    pub fn markers(&self) -> &MarkerConfig {
        &self.markers
    }

    fn last_summary(&self, text: &str) -> Option<Summary> {
        self.summary
            .iter()
            .flat_map(|re| re.captures_iter(text))
            .map(|c| Summary {
                run: group(&c, "run"),
                failed: group(&c, "failures") + group(&c, "errors"),
                at: c.get(0).map_or(0, |m| m.start()),
            })
            .max_by_key(|s| s.at)
    }

    /// Classifies one execution. Pure in the log contents.
    pub fn classify(&self, log: &ExecutionLog) -> TestOutcome {
        let text = log.combined();
        let any = |markers: &[String]| markers.iter().any(|m| text.contains(m.as_str()));
        let mut notes = BTreeSet::new();

        if any(&self.markers.compile_failure) {
            return TestOutcome {
                verdict: Verdict::Err,
                tests_run: 0,
                notes,
            };
        }

        let summary = self.last_summary(&text);
        let tests_run = summary.as_ref().map_or(0, |s| s.run);
        if log.timed_out {
            notes.insert(OutcomeFlag::Timeout);
            return TestOutcome {
                verdict: Verdict::Fail,
                tests_run,
                notes,
            };
        }

        let succeeded = any(&self.markers.build_success);
        let failed_build = any(&self.markers.build_failure) || (!succeeded && log.exit_code != 0);
        let no_tests = any(&self.markers.no_tests);

        let verdict = match summary {
            Some(s) if s.failed > 0 => Verdict::Fail,
            Some(s) if s.run > 0 => {
                if failed_build {
                    Verdict::Fail
                } else {
                    Verdict::Pass
                }
            }
            _ if succeeded && !failed_build => {
                notes.insert(OutcomeFlag::ZeroTestsRun);
                Verdict::Pass
            }
            Some(_) => {
                notes.insert(OutcomeFlag::ZeroTestsRun);
                notes.insert(OutcomeFlag::NotRecognizedAsTest);
                Verdict::Fail
            }
            None if no_tests => {
                notes.insert(OutcomeFlag::ZeroTestsRun);
                notes.insert(OutcomeFlag::NotRecognizedAsTest);
                Verdict::Fail
            }
            None => {
                notes.insert(OutcomeFlag::UnrecognizedLog);
                Verdict::Err
            }
        };
        TestOutcome {
            verdict,
            tests_run: if verdict == Verdict::Err { 0 } else { tests_run },
            notes,
        }
    }
}

/// Classifies with the default marker set.
pub fn classify_log(log: &ExecutionLog) -> TestOutcome {
    LogClassifier::default().classify(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Version;

    fn log(stdout: &str, exit_code: i32) -> ExecutionLog {
        ExecutionLog {
            stdout: stdout.into(),
            stderr: String::new(),
            exit_code,
            duration_secs: 1.0,
            version: Version::Before,
            timed_out: false,
        }
    }

    #[test]
    fn failing_assertion() {
        let o = classify_log(&log("[ERROR] Tests run: 1, Failures: 1, Errors: 0, Skipped: 0\n[INFO] BUILD FAILURE", 1));
        assert_eq!((o.verdict, o.tests_run), (Verdict::Fail, 1));
        assert!(o.notes.is_empty());
    }

    #[test]
    fn compile_error_wins() {
        let o = classify_log(&log("[ERROR] COMPILATION ERROR :\n[ERROR] cannot find symbol\nTests run: 3, Failures: 0, Errors: 0", 1));
        assert_eq!((o.verdict, o.tests_run), (Verdict::Err, 0));
    }

    #[test]
    fn zero_tests_with_successful_build_passes() {
        let o = classify_log(&log("[INFO] Tests run: 0, Failures: 0, Errors: 0, Skipped: 0\n[INFO] BUILD SUCCESS", 0));
        assert_eq!(o.verdict, Verdict::Pass);
        assert_eq!(o.notes, BTreeSet::from([OutcomeFlag::ZeroTestsRun]));
    }

    #[test]
    fn last_summary_line_counts() {
        let text = "Tests run: 2, Failures: 0, Errors: 0, Skipped: 0, Time elapsed: 0.1 s - in a.FooTest\n\
                    Results:\n\nTests run: 2, Failures: 0, Errors: 0, Skipped: 0\n\nBUILD SUCCESS";
        let o = classify_log(&log(text, 0));
        assert_eq!((o.verdict, o.tests_run), (Verdict::Pass, 2));
    }

    #[test]
    fn errors_count_as_failures() {
        let o = classify_log(&log("Tests run: 1, Failures: 0, Errors: 1, Skipped: 0\nBUILD FAILURE", 1));
        assert_eq!(o.verdict, Verdict::Fail);
    }

    #[test]
    fn timeout_is_fail_with_flag() {
        let mut l = log("Running a.FooTest\n", -1);
        l.timed_out = true;
        let o = classify_log(&l);
        assert_eq!(o.verdict, Verdict::Fail);
        assert!(o.notes.contains(&OutcomeFlag::Timeout));
    }

    #[test]
    fn no_tests_executed_failure() {
        let o = classify_log(&log("[ERROR] No tests were executed!\n[INFO] BUILD FAILURE", 1));
        assert_eq!(o.verdict, Verdict::Fail);
        assert!(o.notes.contains(&OutcomeFlag::NotRecognizedAsTest));
        assert!(o.notes.contains(&OutcomeFlag::ZeroTestsRun));
    }

    #[test]
    fn unparseable_is_conservative_err() {
        let o = classify_log(&log("Segmentation fault", 139));
        assert_eq!(o.verdict, Verdict::Err);
        assert_eq!(o.notes, BTreeSet::from([OutcomeFlag::UnrecognizedLog]));
    }

    #[test]
    fn gradle_wording() {
        let o = classify_log(&log("> Task :test FAILED\n3 tests completed, 1 failed\nBUILD FAILED in 2s", 1));
        assert_eq!((o.verdict, o.tests_run), (Verdict::Fail, 3));
        let o = classify_log(&log("> Task :compileTestJava FAILED\nBUILD FAILED", 1));
        assert_eq!(o.verdict, Verdict::Err);
    }

    #[test]
    fn custom_markers() {
        let markers = MarkerConfig {
            compile_failure: vec!["error: ".into()],
            summary: vec![r"(?P<run>\d+) passed; (?P<failures>\d+) failed".into()],
            build_success: vec!["ok".into()],
            ..MarkerConfig::default()
        };
        let c = LogClassifier::new(markers).unwrap();
        assert_eq!(c.classify(&log("test result: 4 passed; 0 failed; ok", 0)).verdict, Verdict::Pass);
        assert!(LogClassifier::new(MarkerConfig {
            summary: vec!["(".into()],
            ..MarkerConfig::default()
        })
        .is_err());
    }
}
