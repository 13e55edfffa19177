use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmError, Mode, Params};

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub ordinal: u32,
    pub sent: String,
    pub received: String,
    pub model: String,
    #[serde(default)]
    pub params: Params,
}

/// Transcripts as one JSON-lines file per conversation under `location`.
/// Conversation ids may contain `/` and map to subdirectories.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    pub mode: Mode,
    pub location: PathBuf,
    /// Replay additionally requires the prompt hash to match.
    pub strict: bool,
}

pub fn prompt_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> LlmError + '_ {
    move |source| LlmError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl TranscriptStore {
    pub fn new(mode: Mode, location: impl Into<PathBuf>) -> Self {
        TranscriptStore {
            mode,
            location: location.into(),
            strict: false,
        }
    }

    pub fn path(&self, conversation: &str) -> PathBuf {
        self.location.join(format!("{conversation}.jsonl"))
    }

    pub fn exists(&self, conversation: &str) -> bool {
        self.path(conversation).is_file()
    }

    /// All exchanges of a conversation in ordinal order; empty when none
    /// were recorded.
    pub fn load(&self, conversation: &str) -> Result<Vec<Exchange>, LlmError> {
        let path = self.path(conversation);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(&path)(e)),
        };
        let mut out: Vec<Exchange> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|source| LlmError::Transcript {
                    path: path.clone(),
                    line: i + 1,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        out.sort_by_key(|e| e.ordinal);
        Ok(out)
    }

    pub(super) fn replay(&self, conversation: &str, ordinal: u32, sent: &str) -> Result<Exchange, LlmError> {
        let ex = self
            .load(conversation)?
            .into_iter()
            .find(|e| e.ordinal == ordinal)
            .ok_or_else(|| LlmError::ReplayMiss {
                conversation: conversation.to_string(),
                ordinal,
            })?;
        let must_match = self.strict || self.mode == Mode::Record;
        if must_match && ex.sent != sent {
            return Err(LlmError::PromptMismatch {
                conversation: conversation.to_string(),
                ordinal,
                expected: prompt_hash(&ex.sent)[..12].to_string(),
                actual: prompt_hash(sent)[..12].to_string(),
            });
        }
        Ok(ex)
    }

    /// Persists `exchange`, dropping any recorded exchange at or after its
    /// ordinal. The file is rewritten through a temporary file and a rename.
    pub fn record(&self, conversation: &str, exchange: Exchange) -> Result<(), LlmError> {
        let mut all = self.load(conversation)?;
        all.retain(|e| e.ordinal < exchange.ordinal);
        all.push(exchange);
        self.write_all(conversation, &all)
    }

    /// Keeps only the first `n` exchanges.
    pub fn truncate(&self, conversation: &str, n: usize) -> Result<(), LlmError> {
        let mut all = self.load(conversation)?;
        if all.len() > n {
            all.truncate(n);
            self.write_all(conversation, &all)?;
        }
        Ok(())
    }

    fn write_all(&self, conversation: &str, all: &[Exchange]) -> Result<(), LlmError> {
        let path = self.path(conversation);
        let dir = path.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(io(dir))?;
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
            for ex in all {
                let line = serde_json::to_string(ex).expect("exchange serializes");
                writeln!(f, "{line}").map_err(io(&tmp))?;
            }
            f.sync_all().map_err(io(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io(&path))
    }
}
