//! Chat conversations, transcript recording/replay and code extraction.

mod extract;
mod openai;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::prompt::PromptMessage;

pub use extract::extract_code;
pub use openai::{OpenAiProvider, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE, DEFAULT_MODEL};
pub use store::{Exchange, TranscriptStore};

pub type Params = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            _ => Err(format!("unknown mode `{s}` (expected live, record, replay)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvMessage {
    pub direction: Direction,
    pub text: String,
    /// Seconds since the epoch.
    pub timestamp: u64,
}

/// One chat thread. Sent and received messages strictly alternate, starting
/// with a sent one.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    id: String,
    messages: Vec<ConvMessage>,
    pub model: String,
    /// Empty means provider defaults.
    pub params: Params,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Conversation {
    pub fn new(id: impl Into<String>, model: impl Into<String>) -> Self {
        Conversation {
            id: id.into(),
            messages: Vec::new(),
            model: model.into(),
            params: Params::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn messages(&self) -> &[ConvMessage] {
        &self.messages
    }

    /// Number of completed exchanges.
    pub fn exchanges(&self) -> usize {
        self.messages.len() / 2
    }

    /// Rebuilds the thread from recorded exchanges, e.g. when resuming.
    pub fn restore(&mut self, exchanges: &[Exchange]) {
        for ex in exchanges {
            self.push(Direction::Sent, ex.sent.clone());
            self.push(Direction::Received, ex.received.clone());
        }
    }

    fn push(&mut self, direction: Direction, text: String) {
        self.messages.push(ConvMessage {
            direction,
            text,
            timestamp: now(),
        });
    }

    fn expects(&self) -> Direction {
        match self.messages.last() {
            Some(m) if m.direction == Direction::Sent => Direction::Received,
            _ => Direction::Sent,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("no recorded exchange #{ordinal} for conversation `{conversation}`")]
    ReplayMiss { conversation: String, ordinal: u32 },
    #[error("conversation `{conversation}` exchange #{ordinal}: prompt hash {actual} differs from recorded {expected}")]
    PromptMismatch {
        conversation: String,
        ordinal: u32,
        expected: String,
        actual: String,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("{0} mode needs a chat provider")]
    NoProvider(Mode),
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error("conversation `{0}` is waiting for a response; cannot send")]
    Alternation(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Transcript {
        path: std::path::PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl LlmError {
    /// Worth retrying: rate limits, server errors, dropped connections.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Provider { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: String,
    pub content: String,
}

/// A chat-completion endpoint. One call is one attempt; retries happen in
/// [`LlmClient`].
pub trait ChatProvider: Send + Sync {
    fn complete(&self, model: &str, params: &Params, turns: &[ChatTurn]) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(2),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_attempts: 1,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1 << attempt.min(16)).min(self.max_delay)
    }
}

pub struct LlmClient {
    pub store: TranscriptStore,
    provider: Option<Box<dyn ChatProvider>>,
    pub retry: RetryPolicy,
}

fn turns(conv: &Conversation, next: &str) -> Vec<ChatTurn> {
    let mut out: Vec<ChatTurn> = conv
        .messages
        .iter()
        .map(|m| ChatTurn {
            role: match m.direction {
                Direction::Sent => "user".into(),
                Direction::Received => "assistant".into(),
            },
            content: m.text.clone(),
        })
        .collect();
    out.push(ChatTurn {
        role: "user".into(),
        content: next.to_string(),
    });
    out
}

impl LlmClient {
    pub fn new(store: TranscriptStore, provider: Option<Box<dyn ChatProvider>>) -> Self {
        LlmClient {
            store,
            provider,
            retry: RetryPolicy::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.store.mode
    }

    fn call(&self, conv: &Conversation, text: &str) -> Result<String, LlmError> {
        let provider = self.provider.as_deref().ok_or(LlmError::NoProvider(self.store.mode))?;
        let turns = turns(conv, text);
        let mut attempt = 0;
        loop {
            match provider.complete(&conv.model, &conv.params, &turns) {
                Err(e) if e.is_transient() && attempt + 1 < self.retry.max_attempts => {
                    let wait = self.retry.delay(attempt);
                    log::warn!("{}: {e}; retrying in {:?}", conv.id, wait);
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Sends `msg` and appends both sides to `conv`.
    ///
    /// Replay mode answers from the store only. Record mode reuses an
    /// already recorded exchange at this position when its prompt matches,
    /// so interrupted runs resume without new provider calls.
    pub fn send(&self, conv: &mut Conversation, msg: &PromptMessage) -> Result<String, LlmError> {
        if conv.expects() != Direction::Sent {
            return Err(LlmError::Alternation(conv.id.clone()));
        }
        let ordinal = conv.exchanges() as u32 + 1;
        let response = match self.store.mode {
            Mode::Live => self.call(conv, &msg.text)?,
            Mode::Replay => self.store.replay(&conv.id, ordinal, &msg.text)?.received,
            Mode::Record => match self.store.replay(&conv.id, ordinal, &msg.text) {
                Ok(ex) => ex.received,
                Err(LlmError::ReplayMiss { .. } | LlmError::PromptMismatch { .. }) => {
                    let received = self.call(conv, &msg.text)?;
                    self.store.record(
                        &conv.id,
                        Exchange {
                            ordinal,
                            sent: msg.text.clone(),
                            received: received.clone(),
                            model: conv.model.clone(),
                            params: conv.params.clone(),
                        },
                    )?;
                    received
                }
                Err(e) => return Err(e),
            },
        };
        conv.push(Direction::Sent, msg.text.clone());
        conv.push(Direction::Received, response.clone());
        Ok(response)
    }
}

/// Provider answering from a fixed script, one response per call.
/// Handy for tests and for producing sample transcripts.
pub struct ScriptedProvider {
    responses: std::sync::Mutex<std::collections::VecDeque<Result<String, LlmError>>>,
    calls: std::sync::atomic::AtomicUsize,
}

impl ScriptedProvider {
    pub fn new<I: IntoIterator<Item = String>>(responses: I) -> Self {
        Self::with_results(responses.into_iter().map(Ok))
    }

    pub fn with_results<I: IntoIterator<Item = Result<String, LlmError>>>(results: I) -> Self {
        ScriptedProvider {
            responses: std::sync::Mutex::new(results.into_iter().collect()),
            calls: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, _model: &str, _params: &Params, _turns: &[ChatTurn]) -> Result<String, LlmError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.responses
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::BadResponse("script exhausted".into())))
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn complete(&self, model: &str, params: &Params, turns: &[ChatTurn]) -> Result<String, LlmError> {
        (**self).complete(model, params, turns)
    }
}
