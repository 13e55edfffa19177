//! The generate, execute, reprompt loop for one (entry, level, config) run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::focal::{self, FocalError, Level};
use crate::harness::{self, HarnessError, TestExecutor, TestOutcome, Verdict};
use crate::layout::{run_key, OutputLayout};
use crate::llm::{extract_code, Conversation, LlmClient, LlmError};
use crate::manifest::{self, ManifestError, MethodLocator, Version, VulnEntry};
use crate::prompt::{self, Budget, FeedbackKind, PromptConfig, PromptError, PromptMessage, Variant};

pub const MAX_CONSECUTIVE_ERRORS: u8 = 3;
pub const MAX_COMPILABLE_WITHOUT_SUCCESS: u8 = 5;
pub const MAX_CONSECUTIVE_NO_CODE: u8 = 3;
/// Safety net on top of the two counter rules.
pub const HARD_ITERATION_CAP: usize = 18;

pub const NO_CODE_NOTE: &str = "your answer contained no code block";
pub const NO_CLASS_NOTE: &str = "your answer contained no class declaration";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VerdictPair {
    pub before: Verdict,
    pub after: Verdict,
}

impl VerdictPair {
    pub const WITNESS: VerdictPair = VerdictPair {
        before: Verdict::Fail,
        after: Verdict::Pass,
    };
    pub const BOTH_ERR: VerdictPair = VerdictPair {
        before: Verdict::Err,
        after: Verdict::Err,
    };

    pub fn new(before: Verdict, after: Verdict) -> Self {
        VerdictPair { before, after }
    }

    pub fn has_err(self) -> bool {
        self.before == Verdict::Err || self.after == Verdict::Err
    }

    pub fn err_count(self) -> usize {
        usize::from(self.before == Verdict::Err) + usize::from(self.after == Verdict::Err)
    }
}

impl fmt::Display for VerdictPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.before, self.after)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    Initial,
    BeforePass,
    AfterFail,
    Error,
}

impl From<FeedbackKind> for PromptKind {
    fn from(k: FeedbackKind) -> Self {
        match k {
            FeedbackKind::BeforePass => PromptKind::BeforePass,
            FeedbackKind::AfterFail => PromptKind::AfterFail,
            FeedbackKind::Error => PromptKind::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Feedback(FeedbackKind),
}

/// Accepts only (FAIL, PASS). Otherwise ERROR beats BEFORE_PASS, which
/// beats AFTER_FAIL.
pub fn select_feedback(before: &TestOutcome, after: &TestOutcome) -> Decision {
    decide(VerdictPair::new(before.verdict, after.verdict))
}

pub fn decide(pair: VerdictPair) -> Decision {
    use Verdict::*;
    match (pair.before, pair.after) {
        (Fail, Pass) => Decision::Accept,
        (Err, _) | (_, Err) => Decision::Feedback(FeedbackKind::Error),
        (Pass, _) => Decision::Feedback(FeedbackKind::BeforePass),
        (Fail, Fail) => Decision::Feedback(FeedbackKind::AfterFail),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoopState {
    pub consecutive_err_count: u8,
    pub compilable_noimprove_count: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Accepted,
    ConsecutiveErrors,
    Stagnation,
    ExtractionFailure,
    BudgetExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Continue,
    Stop(StopReason),
}

/// Applies one non-accepted generation to the counters.
pub fn update_state(state: LoopState, pair: VerdictPair) -> (LoopState, Step) {
    if pair.has_err() {
        let s = LoopState {
            consecutive_err_count: state.consecutive_err_count + 1,
            ..state
        };
        let step = if s.consecutive_err_count >= MAX_CONSECUTIVE_ERRORS {
            Step::Stop(StopReason::ConsecutiveErrors)
        } else {
            Step::Continue
        };
        (s, step)
    } else {
        let s = LoopState {
            consecutive_err_count: 0,
            compilable_noimprove_count: state.compilable_noimprove_count + 1,
        };
        let step = if s.compilable_noimprove_count >= MAX_COMPILABLE_WITHOUT_SUCCESS {
            Step::Stop(StopReason::Stagnation)
        } else {
            Step::Continue
        };
        (s, step)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRefs {
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationNote {
    NoCodeBlock,
    NoClassDeclaration,
    /// The declared test class is not `<FocalClass>Test`.
    NamingDeviation,
    OverBudget,
    MissingCwe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub ordinal: u32,
    pub prompt_kind: PromptKind,
    pub extracted_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_class: Option<String>,
    pub before_outcome: Option<TestOutcome>,
    pub after_outcome: Option<TestOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logs: Option<LogRefs>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<IterationNote>,
}

impl IterationRecord {
    pub fn pair(&self) -> Option<VerdictPair> {
        match (&self.before_outcome, &self.after_outcome) {
            (Some(b), Some(a)) => Some(VerdictPair::new(b.verdict, a.verdict)),
            _ => None,
        }
    }

    fn outcome(&self, version: Version) -> Option<&TestOutcome> {
        match version {
            Version::Before => self.before_outcome.as_ref(),
            Version::After => self.after_outcome.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub entry_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe_id: Option<String>,
    pub level: Level,
    pub config: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_method: Option<MethodLocator>,
    pub iterations: Vec<IterationRecord>,
    pub best_iteration: Option<u32>,
    pub final_pair: VerdictPair,
    pub termination_reason: Option<StopReason>,
    /// Why the run stopped early (provider failure, replay miss, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn new(entry: &VulnEntry, level: Level, config: Variant) -> Self {
        RunRecord {
            entry_id: entry.id.clone(),
            cwe_id: entry.cwe_id.clone(),
            level,
            config,
            focal_method: Some(entry.method_locator.clone()),
            iterations: Vec::new(),
            best_iteration: None,
            final_pair: VerdictPair::BOTH_ERR,
            termination_reason: None,
            error: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.termination_reason.is_some() && self.error.is_none()
    }

    /// Sets `best_iteration` and `final_pair` from the iterations.
    pub fn refresh_best(&mut self) {
        self.best_iteration = select_best_generation(&self.iterations);
        self.final_pair = self
            .best_iteration
            .and_then(|o| self.iterations.iter().find(|it| it.ordinal == o))
            .and_then(IterationRecord::pair)
            .unwrap_or(VerdictPair::BOTH_ERR);
    }

    pub fn best(&self) -> Option<&IterationRecord> {
        let o = self.best_iteration?;
        self.iterations.iter().find(|it| it.ordinal == o)
    }
}

fn rank(pair: VerdictPair) -> u8 {
    if pair == VerdictPair::WITNESS {
        3
    } else {
        2 - pair.err_count() as u8
    }
}

/// Ordinal of the best executed generation: (FAIL, PASS), then no ERR,
/// then one ERR, then two; later ordinals win ties.
pub fn select_best_generation(iterations: &[IterationRecord]) -> Option<u32> {
    iterations
        .iter()
        .filter_map(|it| it.pair().map(|p| (rank(p), it.ordinal)))
        .max()
        .map(|(_, ordinal)| ordinal)
}

/// Counters carried across iterations.
#[derive(Debug, Clone, Copy, Default)]
struct Tracker {
    state: LoopState,
    no_code: u8,
}

impl Tracker {
    fn advance(&mut self, it: &IterationRecord) -> Option<StopReason> {
        if it.extracted_code.is_none() {
            self.no_code += 1;
            return (self.no_code >= MAX_CONSECUTIVE_NO_CODE).then_some(StopReason::ExtractionFailure);
        }
        self.no_code = 0;
        let pair = match it.pair() {
            Some(p) if decide(p) == Decision::Accept => return Some(StopReason::Accepted),
            Some(p) => p,
            None => VerdictPair::BOTH_ERR,
        };
        let (state, step) = update_state(self.state, pair);
        self.state = state;
        match step {
            Step::Stop(r) => Some(r),
            Step::Continue => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Focal(#[from] FocalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Record {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_record(path: &Path) -> Result<RunRecord, RunError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| RunError::Record {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `record` as pretty JSON through a temporary file and a rename.
pub fn save_record(path: &Path, record: &RunRecord) -> Result<(), RunError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io(dir))?;
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(record).expect("record serializes") + "\n";
    fs::write(&tmp, text).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

/// Everything a run needs besides the entry itself.
pub struct RunContext<'a> {
    pub client: &'a LlmClient,
    pub executor: &'a dyn TestExecutor,
    pub layout: &'a OutputLayout,
    pub model: String,
}

/// Materialized trees for the two versions of one run.
#[derive(Debug, Clone)]
pub struct Workspaces {
    pub before: PathBuf,
    pub after: PathBuf,
}

impl Workspaces {
    pub fn get(&self, version: Version) -> &Path {
        match version {
            Version::Before => &self.before,
            Version::After => &self.after,
        }
    }

    pub fn materialize(entry: &VulnEntry, dir: &Path) -> Result<Self, ManifestError> {
        Ok(Workspaces {
            before: manifest::materialize(entry, Version::Before, &dir.join("before"))?,
            after: manifest::materialize(entry, Version::After, &dir.join("after"))?,
        })
    }
}

fn next_prompt(
    prev: &IterationRecord,
    layout: &OutputLayout,
) -> Result<(PromptKind, PromptMessage), RunError> {
    let error_with = |text: &str| -> Result<(PromptKind, PromptMessage), RunError> {
        Ok((
            PromptKind::Error,
            prompt::build_feedback_prompt(FeedbackKind::Error, Some(prompt::log_excerpt(text)))?,
        ))
    };
    if prev.extracted_code.is_none() {
        return error_with(NO_CODE_NOTE);
    }
    let Some(pair) = prev.pair() else {
        return error_with(NO_CLASS_NOTE);
    };
    match decide(pair) {
        Decision::Accept => unreachable!("accepted runs stop"),
        Decision::Feedback(FeedbackKind::Error) => {
            let version = if pair.before == Verdict::Err {
                Version::Before
            } else {
                Version::After
            };
            let log = prev
                .logs
                .as_ref()
                .map(|l| match version {
                    Version::Before => &l.before,
                    Version::After => &l.after,
                })
                .map(|rel| fs::read_to_string(layout.resolve(rel)))
                .transpose()
                .map_err(|e| RunError::Io {
                    path: layout.root.clone(),
                    source: e,
                })?
                .unwrap_or_default();
            debug_assert!(prev.outcome(version).is_some());
            error_with(&log)
        }
        Decision::Feedback(kind) => Ok((kind.into(), prompt::build_feedback_prompt(kind, None)?)),
    }
}

/// Restores an interrupted run: its iterations, counters and conversation.
/// Returns `None` when nothing usable was saved.
fn resume(
    path: &Path,
    conv: &mut Conversation,
    client: &LlmClient,
) -> Result<Option<(RunRecord, Tracker)>, RunError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut record = load_record(path)?;
    let exchanges = client.store.load(conv.id())?;
    if record.iterations.is_empty() || exchanges.len() < record.iterations.len() {
        return Ok(None);
    }
    let mut tracker = Tracker::default();
    for it in &record.iterations {
        if tracker.advance(it).is_some() {
            return Ok(None);
        }
    }
    conv.restore(&exchanges[..record.iterations.len()]);
    record.error = None;
    Ok(Some((record, tracker)))
}

/// Runs (or resumes) the loop for one entry at one level under one config,
/// persisting the record after every iteration. Errors that abort the run
/// are returned; the caller decides whether to record them.
pub fn run_entry(
    entry: &VulnEntry,
    level: Level,
    config: PromptConfig,
    ctx: &RunContext<'_>,
    workspaces: &Workspaces,
) -> Result<RunRecord, RunError> {
    let variant = config.variant();
    let key = run_key(variant, level, &entry.id);
    let path = ctx.layout.record_path(variant, level, &entry.id);
    let mut conv = Conversation::new(key.clone(), ctx.model.clone());

    let (mut record, mut tracker) = match resume(&path, &mut conv, ctx.client)? {
        Some(r) => r,
        None => {
            conv = Conversation::new(key.clone(), ctx.model.clone());
            (RunRecord::new(entry, level, variant), Tracker::default())
        }
    };

    let focal_path = workspaces.before.join(&entry.focal_file);
    let source = fs::read_to_string(&focal_path).map_err(io(&focal_path))?;
    let bins = focal::extract_fragments(&source, &entry.method_locator)?;
    let context = focal::assemble_context(&bins, level);

    loop {
        if record.iterations.len() >= HARD_ITERATION_CAP {
            record.termination_reason = Some(StopReason::BudgetExceeded);
            break;
        }
        let ordinal = record.iterations.len() as u32 + 1;
        let mut notes = Vec::new();
        let (kind, message) = match record.iterations.last() {
            None => {
                let m = prompt::build_initial_prompt(&context, &entry.patched_method_text, entry, config)?;
                if !m.warnings.is_empty() {
                    notes.push(IterationNote::MissingCwe);
                }
                (PromptKind::Initial, m)
            }
            Some(prev) => next_prompt(prev, ctx.layout)?,
        };
        if let Budget::OverBudget { estimated, limit } = prompt::check_budget(&message, prompt::DEFAULT_TOKEN_LIMIT)? {
            log::warn!("{key}: prompt #{ordinal} estimated at {estimated} tokens (limit {limit})");
            notes.push(IterationNote::OverBudget);
        }

        let response = ctx.client.send(&mut conv, &message)?;
        let code = extract_code(&response);
        let mut it = IterationRecord {
            ordinal,
            prompt_kind: kind,
            extracted_code: code.clone(),
            test_class: None,
            before_outcome: None,
            after_outcome: None,
            logs: None,
            notes,
        };
        match code {
            None => it.notes.push(IterationNote::NoCodeBlock),
            Some(code) => execute(&code, entry, ctx, workspaces, variant, level, &mut it)?,
        }
        it.notes.sort();
        let stop = tracker.advance(&it);
        record.iterations.push(it);
        record.refresh_best();
        record.termination_reason = stop;
        save_record(&path, &record)?;
        if stop.is_some() {
            break;
        }
    }
    record.refresh_best();
    save_record(&path, &record)?;
    log::info!("{key}: {} after {} iteration(s), final {}", reason_str(&record), record.iterations.len(), record.final_pair);
    Ok(record)
}

fn reason_str(record: &RunRecord) -> String {
    record
        .termination_reason
        .map(|r| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
        .unwrap_or_else(|| "unfinished".into())
}

fn execute(
    code: &str,
    entry: &VulnEntry,
    ctx: &RunContext<'_>,
    workspaces: &Workspaces,
    variant: Variant,
    level: Level,
    it: &mut IterationRecord,
) -> Result<(), RunError> {
    let log_dir = ctx.layout.log_dir(variant, level, &entry.id, it.ordinal);
    let mut refs = Vec::with_capacity(2);
    for version in Version::BOTH {
        let ws = workspaces.get(version);
        let placed = match harness::place_test(code, ws, entry) {
            Ok(p) => p,
            Err(HarnessError::NoClassDeclaration) => {
                it.notes.push(IterationNote::NoClassDeclaration);
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        if version == Version::Before {
            it.test_class = Some(placed.class.name.clone());
            if placed.class.deviation {
                it.notes.push(IterationNote::NamingDeviation);
            }
        }
        let (outcome, log) = harness::run_generated_test(ctx.executor, ws, entry, &placed.class.name, version)?;
        let raw = harness::persist_log(&log_dir, &log, &outcome)?;
        refs.push(ctx.layout.relative(&raw));
        match version {
            Version::Before => it.before_outcome = Some(outcome),
            Version::After => it.after_outcome = Some(outcome),
        }
    }
    it.logs = Some(LogRefs {
        after: refs.pop().unwrap_or_default(),
        before: refs.pop().unwrap_or_default(),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::*;

    fn it(ordinal: u32, pair: Option<(Verdict, Verdict)>) -> IterationRecord {
        IterationRecord {
            ordinal,
            prompt_kind: PromptKind::Initial,
            extracted_code: Some("class T {}".into()),
            test_class: None,
            before_outcome: pair.map(|p| TestOutcome::new(p.0)),
            after_outcome: pair.map(|p| TestOutcome::new(p.1)),
            logs: None,
            notes: vec![],
        }
    }

    #[test]
    fn decision_table_over_all_nine_pairs() {
        let expected = [
            ((Pass, Pass), Decision::Feedback(FeedbackKind::BeforePass)),
            ((Pass, Fail), Decision::Feedback(FeedbackKind::BeforePass)),
            ((Pass, Err), Decision::Feedback(FeedbackKind::Error)),
            ((Fail, Pass), Decision::Accept),
            ((Fail, Fail), Decision::Feedback(FeedbackKind::AfterFail)),
            ((Fail, Err), Decision::Feedback(FeedbackKind::Error)),
            ((Err, Pass), Decision::Feedback(FeedbackKind::Error)),
            ((Err, Fail), Decision::Feedback(FeedbackKind::Error)),
            ((Err, Err), Decision::Feedback(FeedbackKind::Error)),
        ];
        for ((b, a), want) in expected {
            assert_eq!(select_feedback(&TestOutcome::new(b), &TestOutcome::new(a)), want, "({b}, {a})");
        }
    }

    #[test]
    fn update_state_examples() {
        let s = |e, c| LoopState {
            consecutive_err_count: e,
            compilable_noimprove_count: c,
        };
        assert_eq!(update_state(s(2, 0), VerdictPair::new(Err, Pass)).1, Step::Stop(StopReason::ConsecutiveErrors));
        assert_eq!(update_state(s(2, 0), VerdictPair::new(Fail, Fail)), (s(0, 1), Step::Continue));
        assert_eq!(update_state(s(0, 4), VerdictPair::new(Pass, Pass)).1, Step::Stop(StopReason::Stagnation));
        assert_eq!(update_state(s(1, 3), VerdictPair::new(Pass, Err)), (s(2, 3), Step::Continue));
    }

    #[test]
    fn best_generation_examples() {
        let its = [it(1, Some((Err, Err))), it(2, Some((Fail, Fail))), it(3, Some((Err, Err)))];
        assert_eq!(select_best_generation(&its), Some(2));
        assert_eq!(select_best_generation(&[it(1, Some((Fail, Fail))), it(2, Some((Fail, Pass)))]), Some(2));
        assert_eq!(select_best_generation(&[it(1, Some((Pass, Pass))), it(2, Some((Fail, Fail)))]), Some(2));
        assert_eq!(select_best_generation(&[it(1, Some((Fail, Pass))), it(2, Some((Pass, Pass)))]), Some(1));
        assert_eq!(select_best_generation(&[it(1, Some((Err, Err))), it(2, Some((Err, Pass)))]), Some(2));
        assert_eq!(select_best_generation(&[it(1, None)]), None);
    }

    #[test]
    fn final_pair_defaults_to_both_err() {
        let e: VulnEntry = serde_json::from_value(serde_json::json!({
            "id": "E", "before_ref": {"dir": "b"}, "after_ref": {"dir": "a"}, "focal_file": "F.java",
            "method_locator": {"class_name": "F", "method_name": "f"}, "patched_method_text": "x",
            "test_target_dir": "t", "build_spec": {"compile_and_test_command": ["{test_class}"]}
        }))
        .unwrap();
        let mut r = RunRecord::new(&e, Level::L1, Variant::Baseline);
        r.iterations.push(it(1, None));
        r.refresh_best();
        assert_eq!((r.best_iteration, r.final_pair), (None, VerdictPair::BOTH_ERR));
        r.iterations.push(it(2, Some((Pass, Pass))));
        r.refresh_best();
        assert_eq!((r.best_iteration, r.final_pair), (Some(2), VerdictPair::new(Pass, Pass)));
    }

    #[test]
    fn tracker_stops() {
        let mut t = Tracker::default();
        let mut none = it(1, None);
        none.extracted_code = None;
        assert_eq!(t.advance(&none), None);
        assert_eq!(t.advance(&none), None);
        assert_eq!(t.advance(&none), Some(StopReason::ExtractionFailure));

        let mut t = Tracker::default();
        assert_eq!(t.advance(&it(1, Some((Fail, Pass)))), Some(StopReason::Accepted));
        // code without a class declaration counts as uncompilable
        let mut t = Tracker::default();
        for _ in 0..2 {
            assert_eq!(t.advance(&it(1, None)), None);
        }
        assert_eq!(t.advance(&it(1, None)), Some(StopReason::ConsecutiveErrors));
    }
}
