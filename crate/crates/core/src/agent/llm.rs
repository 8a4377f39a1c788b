//! LLM client contract and the scripted replay client used for tests and
//! reproducible experiments.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde_json::Value as Json;
use thiserror::Error;

use super::ChatMessage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("LLM transport error: {0}")]
    Transport(String),
    #[error("LLM provider error: {0}")]
    Provider(String),
    #[error("replay script exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("replay script line {line}: {message}")]
    Script { line: usize, message: String },
}

/// Produces the raw text of the next assistant turn. No guarantees are made
/// about the text; callers parse and validate it.
pub trait LlmClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], reply_schema: &Json) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, messages: &[ChatMessage], reply_schema: &Json) -> Result<String, LlmError> {
        (**self).complete(messages, reply_schema)
    }
}

/// Replays canned raw replies in order.
///
/// Script files hold one JSON value per line. A JSON string is replayed as
/// its contents (which may be deliberately malformed); any other value is
/// replayed as its compact serialization. Blank lines and lines starting
/// with `//` are skipped.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    replies: Mutex<VecDeque<String>>,
    served: Mutex<usize>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedClient {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedClient {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            ..Default::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut replies = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let value: Json = serde_json::from_str(line).map_err(|e| LlmError::Script {
                line: i + 1,
                message: e.to_string(),
            })?;
            replies.push(match value {
                Json::String(s) => s,
                other => other.to_string(),
            });
        }
        Ok(Self::new(replies))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Script {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Number of `complete` calls answered so far.
    pub fn calls(&self) -> usize {
        *self.served.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }

    /// The message lists the client was called with, in call order.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.seen.lock().unwrap().clone()
    }
}

/// Serializes a script back to its file form.
pub fn render_script<S: AsRef<str>>(replies: &[S]) -> String {
    let mut out = String::new();
    for r in replies {
        let r = r.as_ref();
        match serde_json::from_str::<Json>(r) {
            Ok(v) if v.is_object() && v.to_string() == r => out.push_str(r),
            _ => out.push_str(&Json::String(r.to_string()).to_string()),
        }
        out.push('\n');
    }
    out
}

impl LlmClient for ScriptedClient {
    fn complete(&self, messages: &[ChatMessage], _reply_schema: &Json) -> Result<String, LlmError> {
        self.seen.lock().unwrap().push(messages.to_vec());
        let mut served = self.served.lock().unwrap();
        let next = self.replies.lock().unwrap().pop_front();
        match next {
            Some(r) => {
                *served += 1;
                Ok(r)
            }
            None => Err(LlmError::ScriptExhausted(*served)),
        }
    }
}
