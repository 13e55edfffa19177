//! Initial and feedback prompt construction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::focal::FocalContext;
use crate::manifest::{VulnEntry, NOT_MAPPING};

pub const ROLE_SENTENCE: &str = "You are a senior software tester and a cyber security specialist.";

const TASK: &str = "You will be given the source code of a Java class where you will find the context of a vulnerable method before and after the patch.\n\
Your task is to create a unit test that triggers the vulnerability and fails before the patch and passes after it. The class' name should be the name of the class appended with the string \"Test\".\n\
Use simple Java language features in the generated test!";

const PATCHED_INTRO: &str = "The method after patching the vulnerability:";

pub const EMOTION_SENTENCE: &str =
    "It is very important for me, please create the unittest based on your best knowledge in the given context.";

pub const BEFORE_PASS_TEXT: &str = "The test you've provided should have failed for the original version of the vulnerability before the patch, but it passes. Please fix it and return the whole code.";
pub const AFTER_FAIL_TEXT: &str = "The test you've provided should have passed for the patched version of the vulnerability, but it fails. Please fix it and return the whole code.";
const ERROR_HEAD: &str = "The code you provided has errors in it: ";
const ERROR_TAIL: &str = ". Fix the error indicated by the compiler message, and answer with the WHOLE fixed code only.";

/// Characters of a failing log kept for an ERROR reprompt (the tail).
pub const LOG_EXCERPT_CHARS: usize = 4000;
pub const DEFAULT_TOKEN_LIMIT: usize = 128_000;
/// Characters per token assumed by [`check_budget`]; deliberately low so the
/// estimate errs on the large side.
pub const CHARS_PER_TOKEN: usize = 3;

pub fn cwe_line(cwe: &str) -> String {
    format!("The vulnerability is categorized as {cwe}.")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    NoEmotion,
    NoRole,
    WithCwe,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::NoEmotion, Variant::NoRole, Variant::WithCwe];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::NoEmotion => "no_emotion",
            Variant::NoRole => "no_role",
            Variant::WithCwe => "with_cwe",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| format!("unknown prompt config `{s}` (expected baseline, no_emotion, no_role, with_cwe)"))
    }
}

/// Prompt flags. Only constructible from a [`Variant`], so the flags always
/// agree with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Variant", into = "Variant")]
pub struct PromptConfig {
    variant: Variant,
    include_role: bool,
    include_emotion: bool,
    include_cwe: bool,
}

impl From<Variant> for PromptConfig {
    fn from(variant: Variant) -> Self {
        let (include_role, include_emotion, include_cwe) = match variant {
            Variant::Baseline => (true, true, false),
            Variant::NoEmotion => (true, false, false),
            Variant::NoRole => (false, false, false),
            Variant::WithCwe => (true, true, true),
        };
        PromptConfig {
            variant,
            include_role,
            include_emotion,
            include_cwe,
        }
    }
}

impl From<PromptConfig> for Variant {
    fn from(c: PromptConfig) -> Self {
        c.variant
    }
}

impl PromptConfig {
    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn include_role(&self) -> bool {
        self.include_role
    }
    pub fn include_emotion(&self) -> bool {
        self.include_emotion
    }
    pub fn include_cwe(&self) -> bool {
        self.include_cwe
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptWarning {
    /// `with_cwe` was requested but the entry has no CWE.
    MissingCwe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<PromptWarning>,
}

impl PromptMessage {
    pub fn user(text: String) -> Self {
        PromptMessage {
            role: Role::User,
            text,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeedbackKind {
    BeforePass,
    AfterFail,
    Error,
}

impl fmt::Display for FeedbackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackKind::BeforePass => "BEFORE_PASS",
            FeedbackKind::AfterFail => "AFTER_FAIL",
            FeedbackKind::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("an ERROR feedback prompt needs a log excerpt")]
    MissingLogExcerpt,
    #[error("token limit must be positive")]
    ZeroLimit,
}

fn render(focal: &str, patched: &str, role: bool, cwe: Option<&str>, emotion: bool) -> String {
    let mut text = String::new();
    if role {
        text.push_str(ROLE_SENTENCE);
        text.push('\n');
    }
    text.push_str(TASK);
    text.push_str("\n\n");
    if let Some(cwe) = cwe {
        text.push_str(&cwe_line(cwe));
        text.push_str("\n\n");
    }
    text.push_str(focal);
    text.push_str("\n\n");
    text.push_str(PATCHED_INTRO);
    text.push_str("\n\n");
    text.push_str(patched);
    if emotion {
        text.push_str("\n\n");
        text.push_str(EMOTION_SENTENCE);
    }
    text
}

pub fn build_initial_prompt(
    focal: &FocalContext,
    patched_method: &str,
    entry: &VulnEntry,
    config: PromptConfig,
) -> Result<PromptMessage, PromptError> {
    if focal.snippet.trim().is_empty() {
        return Err(PromptError::EmptyInput("focal context"));
    }
    if patched_method.trim().is_empty() {
        return Err(PromptError::EmptyInput("patched method"));
    }
    let mut warnings = Vec::new();
    let cwe = match entry.cwe_group() {
        _ if !config.include_cwe => None,
        NOT_MAPPING => {
            warnings.push(PromptWarning::MissingCwe);
            None
        }
        cwe => Some(cwe),
    };
    let text = render(&focal.snippet, patched_method, config.include_role, cwe, config.include_emotion);
    Ok(PromptMessage {
        role: Role::User,
        text,
        warnings,
    })
}

/// Last [`LOG_EXCERPT_CHARS`] characters of `log`.
pub fn log_excerpt(log: &str) -> &str {
    let count = log.chars().count();
    if count <= LOG_EXCERPT_CHARS {
        return log;
    }
    let skip = log.char_indices().nth(count - LOG_EXCERPT_CHARS).map_or(0, |(i, _)| i);
    &log[skip..]
}

pub fn build_feedback_prompt(kind: FeedbackKind, log_excerpt: Option<&str>) -> Result<PromptMessage, PromptError> {
    let text = match kind {
        FeedbackKind::BeforePass => BEFORE_PASS_TEXT.to_string(),
        FeedbackKind::AfterFail => AFTER_FAIL_TEXT.to_string(),
        FeedbackKind::Error => {
            let log = log_excerpt.ok_or(PromptError::MissingLogExcerpt)?;
            format!("{ERROR_HEAD}{log}{ERROR_TAIL}")
        }
    };
    Ok(PromptMessage::user(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Budget {
    Ok { estimated: usize },
    OverBudget { estimated: usize, limit: usize },
}

pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(CHARS_PER_TOKEN)
}

pub fn check_budget(message: &PromptMessage, limit: usize) -> Result<Budget, PromptError> {
    if limit == 0 {
        return Err(PromptError::ZeroLimit);
    }
    let estimated = estimate_tokens(&message.text);
    Ok(if estimated > limit {
        Budget::OverBudget { estimated, limit }
    } else {
        Budget::Ok { estimated }
    })
}

pub const FOCAL_PLACEHOLDER: &str = "{focal context of the vulnerable code}";
pub const PATCHED_PLACEHOLDER: &str = "{patched method of vulnerable code}";
pub const CWE_PLACEHOLDER: &str = "{cwe}";
pub const LOG_PLACEHOLDER: &str = "<log>";

/// Every template with its placeholders left in, as `(file name, text)`.
pub fn catalog() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Variant::ALL
        .into_iter()
        .map(|v| {
            let c = PromptConfig::from(v);
            let cwe = c.include_cwe.then_some(CWE_PLACEHOLDER);
            let text = render(FOCAL_PLACEHOLDER, PATCHED_PLACEHOLDER, c.include_role, cwe, c.include_emotion);
            (format!("{v}.txt"), text)
        })
        .collect();
    out.push(("before_pass.txt".into(), BEFORE_PASS_TEXT.into()));
    out.push(("after_fail.txt".into(), AFTER_FAIL_TEXT.into()));
    out.push(("error.txt".into(), format!("{ERROR_HEAD}{LOG_PLACEHOLDER}{ERROR_TAIL}")));
    out
}
