//! Fixture loaders and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use witgen::feedback::{RunRecord, StopReason, VerdictPair};
use witgen::focal::Level;
use witgen::harness::Verdict;
use witgen::manifest::MethodLocator;
use witgen::prompt::Variant;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// One row of the per-entry results grid: (before, after, manual) per level.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub entry: String,
    pub cells: [(Verdict, Verdict, String); 4],
}

pub fn table1_rows() -> Vec<GridRow> {
    let text = read(&fixtures().join("table1/results.tsv"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 13, "bad row {l}");
            let cell = |i: usize| (f[1 + 3 * i].parse().unwrap(), f[2 + 3 * i].parse().unwrap(), f[3 + 3 * i].to_string());
            GridRow {
                entry: f[0].to_string(),
                cells: [cell(0), cell(1), cell(2), cell(3)],
            }
        })
        .collect()
}

pub fn record(entry: &str, level: Level, config: Variant, pair: VerdictPair) -> RunRecord {
    RunRecord {
        entry_id: entry.to_string(),
        cwe_id: None,
        level,
        config,
        focal_method: None,
        iterations: vec![],
        best_iteration: None,
        final_pair: pair,
        termination_reason: Some(if pair == VerdictPair::WITNESS {
            StopReason::Accepted
        } else {
            StopReason::Stagnation
        }),
        error: None,
    }
}

/// The results grid as baseline run records.
pub fn table1_records() -> Vec<RunRecord> {
    let mut out = Vec::new();
    for row in table1_rows() {
        for (i, level) in Level::ALL.into_iter().enumerate() {
            let (b, a, _) = &row.cells[i];
            out.push(record(&row.entry, level, Variant::Baseline, VerdictPair::new(*b, *a)));
        }
    }
    out
}

/// Writes the grid as `<out>/runs/baseline/<L>/<id>.json`.
pub fn write_table1_runs(out: &Path) -> PathBuf {
    let layout = witgen::layout::OutputLayout::new(out);
    for r in table1_records() {
        witgen::feedback::save_record(&layout.record_path(r.config, r.level, &r.entry_id), &r).unwrap();
    }
    layout.runs
}

#[derive(Debug, Clone)]
pub struct JavaCase {
    pub file: PathBuf,
    pub locator: MethodLocator,
}

pub fn java_corpus() -> Vec<JavaCase> {
    let dir = fixtures().join("java");
    let text = read(&dir.join("corpus.csv"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let params = match f[3] {
                "-" => None,
                p => Some(p.split(';').map(str::to_string).collect()),
            };
            JavaCase {
                file: dir.join(f[0]),
                locator: MethodLocator {
                    class_name: f[1].to_string(),
                    method_name: f[2].to_string(),
                    parameter_types: params,
                },
            }
        })
        .collect()
}

/// Hand-labelled build log: expected verdict, tests run and flags.
#[derive(Debug, Clone)]
pub struct LabelledLog {
    pub file: PathBuf,
    pub exit_code: i32,
    pub timed_out: bool,
    pub verdict: Verdict,
    pub tests_run: u32,
    pub flags: Vec<String>,
}

pub fn log_corpus() -> Vec<LabelledLog> {
    let dir = fixtures().join("logs");
    let text = read(&dir.join("labels.csv"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            LabelledLog {
                file: dir.join(f[0]),
                exit_code: f[1].parse().unwrap(),
                timed_out: f[2] == "true",
                verdict: f[3].parse().unwrap(),
                tests_run: f[4].parse().unwrap(),
                flags: f[5].split(';').filter(|s| !s.is_empty()).map(str::to_string).collect(),
            }
        })
        .collect()
}

pub mod oracle {
    use tree_sitter::{Node, Parser, Query, QueryCursor, StreamingIterator};

    const TYPE_DECLS: &str = "[(class_declaration) (interface_declaration) (enum_declaration) (record_declaration) (annotation_type_declaration)] @type";

    const MEMBERS: &str = "[(field_declaration) (constant_declaration) (constructor_declaration) (compact_constructor_declaration) (method_declaration) (class_declaration) (interface_declaration) (enum_declaration) (record_declaration) (annotation_type_declaration)] @member";

    fn language() -> tree_sitter::Language {
        tree_sitter_java::LANGUAGE.into()
    }

    pub fn parse(src: &str) -> tree_sitter::Tree {
        let mut p = Parser::new();
        p.set_language(&language()).expect("java grammar loads");
        p.parse(src, None).expect("parser returns a tree")
    }

    pub fn has_errors(src: &str) -> bool {
        parse(src).root_node().has_error()
    }

    fn top_level_type<'t>(root: Node<'t>, src: &str, name: &str) -> Option<Node<'t>> {
        let q = Query::new(&language(), TYPE_DECLS).unwrap();
        let mut cur = QueryCursor::new();
        let mut matches = cur.matches(&q, root, src.as_bytes());
        while let Some(m) = matches.next() {
            for c in m.captures() {
                let n = c.node;
                let top = n.parent().is_some_and(|p| p.kind() == "program");
                let named = n
                    .child_by_field_name("name")
                    .and_then(|x| x.utf8_text(src.as_bytes()).ok())
                    == Some(name);
                if top && named {
                    return Some(n);
                }
            }
        }
        None
    }

    /// Direct member declarations of top-level type `name`, by kind.
    /// Initializer blocks are not members.
    pub fn member_kinds(src: &str, name: &str) -> Vec<String> {
        let tree = parse(src);
        let Some(ty) = top_level_type(tree.root_node(), src, name) else {
            return Vec::new();
        };
        let body = ty.child_by_field_name("body").expect("type has a body");
        let q = Query::new(&language(), MEMBERS).unwrap();
        let mut cur = QueryCursor::new();
        let mut out = Vec::new();
        let mut matches = cur.matches(&q, body, src.as_bytes());
        while let Some(m) = matches.next() {
            for c in m.captures() {
                let parent = c.node.parent().expect("member has a parent");
                let direct = parent.id() == body.id()
                    || (parent.kind() == "enum_body_declarations" && parent.parent().is_some_and(|g| g.id() == body.id()));
                if direct {
                    out.push(c.node.kind().to_string());
                }
            }
        }
        out
    }
}

/// The three-entry sample dataset with scripted model answers.
pub mod sample {
    use std::path::{Path, PathBuf};

    use witgen::feedback::{run_entry, RunContext, Workspaces};
    use witgen::focal::Level;
    use witgen::harness::ProcessExecutor;
    use witgen::layout::OutputLayout;
    use witgen::llm::{LlmClient, Mode, ScriptedProvider, TranscriptStore};
    use witgen::manifest::load_manifest;
    use witgen::prompt::{PromptConfig, Variant};

    pub const CONFIGS: [Variant; 2] = [Variant::Baseline, Variant::NoRole];

    pub fn dir() -> PathBuf {
        super::fixtures().join("sample")
    }

    pub fn manifest() -> PathBuf {
        dir().join("manifest.json")
    }

    pub fn transcripts() -> PathBuf {
        dir().join("transcripts")
    }

    fn answer(class: &str, before: Option<&str>, after: Option<&str>) -> String {
        let sim = match (before, after) {
            (Some(b), Some(a)) => format!("    // sim: before={b} after={a}\n"),
            _ => String::new(),
        };
        format!(
            "Here is the test.\n\n```java\npackage org.example;\n\nimport org.junit.jupiter.api.Test;\nimport static org.junit.jupiter.api.Assertions.*;\n\npublic class {class}Test {{\n{sim}    @Test\n    void witness() {{\n        assertTrue(new {class}() != null);\n    }}\n}}\n```\n"
        )
    }

    /// Scripted answers per entry: accepted at once; compile error, then
    /// both pass, then accepted; no code, then stagnation.
    pub fn script(entry_id: &str) -> Vec<String> {
        match entry_id {
            "SAMPLE-01" => vec![answer("PathUtil", Some("FAIL"), Some("PASS"))],
            "SAMPLE-02" => vec![
                answer("XmlReader", None, None),
                answer("XmlReader", Some("PASS"), Some("PASS")),
                answer("XmlReader", Some("FAIL"), Some("PASS")),
            ],
            "SAMPLE-03" => {
                let mut v = vec!["I need more context about this class before writing a test.".to_string()];
                v.extend((0..5).map(|_| answer("Scanner", Some("FAIL"), Some("FAIL"))));
                v
            }
            other => panic!("no script for {other}"),
        }
    }

    /// Records every sample run into `out` with scripted answers.
    pub fn record(out: &Path) {
        let layout = OutputLayout::new(out);
        let executor = ProcessExecutor::default();
        for entry in load_manifest(&manifest()).unwrap() {
            for config in CONFIGS {
                for level in Level::ALL {
                    let provider = ScriptedProvider::new(script(&entry.id));
                    let client = LlmClient::new(TranscriptStore::new(Mode::Record, &layout.transcripts), Some(Box::new(provider)));
                    let ctx = RunContext {
                        client: &client,
                        executor: &executor,
                        layout: &layout,
                        model: witgen::llm::DEFAULT_MODEL.to_string(),
                    };
                    let ws = Workspaces::materialize(&entry, &layout.workspace_dir(config, level, &entry.id)).unwrap();
                    run_entry(&entry, level, PromptConfig::from(config), &ctx, &ws).unwrap();
                }
            }
        }
    }

    pub fn copy_dir(from: &Path, to: &Path) {
        for e in walkdir::WalkDir::new(from) {
            let e = e.unwrap();
            let dest = to.join(e.path().strip_prefix(from).unwrap());
            if e.file_type().is_dir() {
                std::fs::create_dir_all(&dest).unwrap();
            } else {
                std::fs::copy(e.path(), &dest).unwrap();
            }
        }
    }
}

pub mod replay {
    use std::collections::BTreeMap;
    use std::path::Path;

    use witgen::commands::{cmd_run, RunConfig, RunSummary};
    use witgen::harness::ProcessExecutor;
    use witgen::llm::Mode;

    use super::sample;

    /// Replays the sample transcripts into `out`.
    pub fn run(out: &Path, workers: usize) -> RunSummary {
        sample::copy_dir(&sample::transcripts(), &out.join("transcripts"));
        let mut cfg = RunConfig::new(sample::manifest(), out.to_path_buf());
        cfg.mode = Mode::Replay;
        cfg.configs = sample::CONFIGS.to_vec();
        cfg.workers = workers;
        cmd_run(&cfg, &ProcessExecutor::default(), None).unwrap()
    }

    /// Relative path to contents of every file below `root/sub`.
    pub fn snapshot(root: &Path, sub: &str) -> BTreeMap<String, Vec<u8>> {
        walkdir::WalkDir::new(root.join(sub))
            .into_iter()
            .map(Result::unwrap)
            .filter(|e| e.file_type().is_file())
            .map(|e| {
                let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().into_owned();
                (rel, std::fs::read(e.path()).unwrap())
            })
            .collect()
    }
}

/// A build stand-in driven by `// sim:` comments in the placed test.
pub mod sim {
    use std::path::Path;

    use witgen::harness::{ExecutionLog, HarnessError, TestExecutor, Verdict, PLACED_MARKER};
    use witgen::manifest::{Version, VulnEntry};

    /// Answers with the verdicts named in the placed test's `// sim:` comment.
    pub struct SimExecutor;

    pub fn sim_verdict(code: &str, version: Version) -> Verdict {
        let key = format!("{version}=");
        code.lines()
            .find_map(|l| l.trim().strip_prefix("// sim:"))
            .and_then(|s| s.split_whitespace().find_map(|kv| kv.strip_prefix(key.as_str())))
            .and_then(|v| v.parse().ok())
            .unwrap_or(Verdict::Err)
    }

    impl TestExecutor for SimExecutor {
        fn execute(&self, ws: &Path, _: &VulnEntry, class: &str, version: Version) -> Result<ExecutionLog, HarnessError> {
            let rel = std::fs::read_to_string(ws.join(PLACED_MARKER)).unwrap();
            let code = std::fs::read_to_string(ws.join(rel.trim())).unwrap();
            let (stdout, exit_code) = match sim_verdict(&code, version) {
                Verdict::Pass => ("Tests run: 1, Failures: 0, Errors: 0, Skipped: 0\nBUILD SUCCESS".to_string(), 0),
                Verdict::Fail => (format!("Tests run: 1, Failures: 1, Errors: 0, Skipped: 0\n{class} failed\nBUILD FAILURE"), 1),
                Verdict::Err => ("COMPILATION ERROR\nBUILD FAILURE".to_string(), 1),
            };
            Ok(ExecutionLog { stdout, stderr: String::new(), exit_code, duration_secs: 0.0, version, timed_out: false })
        }
    }

    #[derive(Debug, Clone)]
    pub enum Answer {
        NoCode,
        NoClass,
        Test(Verdict, Verdict),
    }

    pub fn render(a: &Answer) -> String {
        match a {
            Answer::NoCode => "Sorry, I can't.".into(),
            Answer::NoClass => "```java\nint x = 1;\n```".into(),
            Answer::Test(b, a) => format!("```java\npublic class PathUtilTest {{\n    // sim: before={b} after={a}\n}}\n```"),
        }
    }

    /// Runs SAMPLE-01 at L1 against `answers` with the simulated build.
    pub fn run_script(answers: &[Answer]) -> (witgen::feedback::RunRecord, Vec<witgen::llm::Exchange>) {
        use witgen::feedback::{run_entry, RunContext, Workspaces};
        use witgen::focal::Level;
        use witgen::layout::{run_key, OutputLayout};
        use witgen::llm::{LlmClient, Mode, ScriptedProvider, TranscriptStore};
        use witgen::prompt::{PromptConfig, Variant};

        let entry = witgen::manifest::load_manifest(&super::sample::manifest()).unwrap().remove(0);
        let tmp = tempfile::tempdir().unwrap();
        let layout = OutputLayout::new(tmp.path());
        let provider = ScriptedProvider::new(answers.iter().map(render));
        let client = LlmClient::new(TranscriptStore::new(Mode::Record, &layout.transcripts), Some(Box::new(provider)));
        let ctx = RunContext { client: &client, executor: &SimExecutor, layout: &layout, model: "m".into() };
        let ws = Workspaces::materialize(&entry, &layout.workspace_dir(Variant::Baseline, Level::L1, &entry.id)).unwrap();
        let r = run_entry(&entry, Level::L1, PromptConfig::from(Variant::Baseline), &ctx, &ws).unwrap();
        let exchanges = client.store.load(&run_key(Variant::Baseline, Level::L1, &entry.id)).unwrap();
        (r, exchanges)
    }
}

/// Slicing checks shared by the corpus test and the acceptance run.
pub mod slicing {
    use witgen::focal::{extract_fragments, slice_all, FragmentBins};

    use super::{oracle, JavaCase};

    pub fn member_count(bins: &FragmentBins) -> usize {
        bins.field_decls.len() + bins.constructor_headers.len() + bins.method_headers.len() + bins.nested_type_headers.len() + 1
    }

    /// Lines of `a` appear in `b` in order. A bare `;` line only keeps an
    /// enum body well formed and is skipped.
    pub fn is_line_subsequence(a: &str, b: &str) -> bool {
        let mut rest = b.lines();
        a.lines().filter(|l| l.trim() != ";").all(|line| rest.any(|other| other == line))
    }

    /// Containment, verbatim focal method, clean parses and the L3 member
    /// count against the grammar.
    pub fn check(case: &JavaCase) -> Result<(), String> {
        let name = case.file.display();
        let src = super::read(&case.file);
        let bins = extract_fragments(&src, &case.locator).map_err(|e| format!("{name}: {e}"))?;
        let s = slice_all(&src, &case.locator).map_err(|e| format!("{name}: {e}"))?;
        for (k, ctx) in s.iter().enumerate() {
            if !ctx.snippet.contains(&bins.vulnerable_method) {
                return Err(format!("{name}: L{k} lacks the vulnerable method"));
            }
            if oracle::has_errors(&ctx.snippet) {
                return Err(format!("{name}: L{k} does not parse"));
            }
            if k < 3
                && !(ctx.fragments_used.is_subset(&s[k + 1].fragments_used)
                    && is_line_subsequence(&ctx.snippet, &s[k + 1].snippet))
            {
                return Err(format!("{name}: L{k} not contained in L{}", k + 1));
            }
        }
        let class = case.locator.simple_class_name();
        let mut original = oracle::member_kinds(&src, class);
        let mut sliced = oracle::member_kinds(&s[3].snippet, class);
        original.sort();
        sliced.sort();
        if original.len() != member_count(&bins) || original != sliced {
            return Err(format!(
                "{name}: members grammar={} ours={} L3={}",
                original.len(),
                member_count(&bins),
                sliced.len()
            ));
        }
        Ok(())
    }
}
