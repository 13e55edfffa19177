//! The `witgen` binary end to end.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{replay, sample};
use witgen::feedback::load_record;
use witgen::focal::Level;
use witgen::layout::OutputLayout;
use witgen::prompt::Variant;

fn witgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_witgen"))
        .args(args)
        .env_remove("WITGEN_API_KEY")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_transcript_fails_only_that_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    sample::copy_dir(&sample::transcripts(), &out.join("transcripts"));
    std::fs::remove_file(out.join("transcripts/baseline/L0/SAMPLE-02.jsonl")).unwrap();
    let o = witgen(&["run", "--manifest", p(&sample::manifest()), "--out", p(out), "--levels", "L0,L1"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains("\tfailed")).count(), 1, "{stdout}");
    let layout = OutputLayout::new(out);
    let failed = load_record(&layout.record_path(Variant::Baseline, Level::L0, "SAMPLE-02")).unwrap();
    assert!(failed.error.is_some() && !failed.is_complete());
    assert!(load_record(&layout.record_path(Variant::Baseline, Level::L1, "SAMPLE-02")).unwrap().is_complete());

    // restoring the transcript lets a rerun finish the failed run only
    std::fs::copy(
        sample::transcripts().join("baseline/L0/SAMPLE-02.jsonl"),
        out.join("transcripts/baseline/L0/SAMPLE-02.jsonl"),
    )
    .unwrap();
    let o = witgen(&["run", "--manifest", p(&sample::manifest()), "--out", p(out), "--levels", "L0,L1"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.ends_with("\tcompleted")).count(), 1, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.ends_with("\tskipped")).count(), 5, "{stdout}");
}

#[test]
fn slice_writes_four_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let o = witgen(&["slice", "SAMPLE-01", "--manifest", p(&sample::manifest()), "--dest", p(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for level in Level::ALL {
        let text = std::fs::read_to_string(tmp.path().join(format!("SAMPLE-01.{level}.txt"))).unwrap();
        assert!(text.contains("public File resolve(String name)"));
    }
    let o = witgen(&["slice", "NOPE-9", "--manifest", p(&sample::manifest()), "--dest", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NOPE-9"));
}

#[test]
fn dry_run_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = witgen(&["run", "--dry-run", "--mode", "live", "--manifest", p(&sample::manifest()), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 12);
    assert!(!out.exists());
}

#[test]
fn live_mode_needs_a_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = witgen(&["run", "--mode", "live", "--manifest", p(&sample::manifest()), "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("WITGEN_API_KEY"));
}

#[test]
fn validate_and_prompts() {
    let o = witgen(&["validate", "--manifest", p(&sample::manifest())]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "3 entries valid");
    let tmp = tempfile::tempdir().unwrap();
    let o = witgen(&["prompts", "--dest", p(tmp.path())]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 7);
}

#[test]
fn report_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    replay::run(tmp.path(), 1);
    let out = p(tmp.path());
    let args = ["report", "--out", out, "--format", "csv"];
    assert!(witgen(&args).status.success());
    let first = replay::snapshot(tmp.path(), "report");
    assert!(first.contains_key("report/table1.csv") && first.contains_key("report/table1.no_role.csv"));
    assert!(witgen(&args).status.success());
    assert_eq!(first, replay::snapshot(tmp.path(), "report"));
}
