//! Chat-completion client contract shared by the networked and mock backends.
//!
//! A [`ChatPrompt`] is an ordered conversation: one system message followed
//! by alternating user/assistant turns, ending on the user turn awaiting
//! completion. [`ChatClient::complete`] returns the assistant text for that
//! final turn. Clients are shareable across threads so callers can issue
//! bounded-concurrency request batches; each call carries its own retry and
//! backoff state.

pub mod http;
pub mod mock;

pub use http::{HttpChatClient, HttpClientConfig, API_KEY_ENV};
pub use mock::MockChatClient;

use serde::Serialize;
use thiserror::Error;

/// Speaker of one chat turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One turn of a chat conversation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// A complete chat-completion request: the conversation plus decoding
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatPrompt {
    pub messages: Vec<ChatMessage>,
    /// Sampling temperature; 0 for reproducible annotation runs.
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatPrompt {
    /// Wraps messages with the default decoding parameters (temperature 0,
    /// 512 max tokens).
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        ChatPrompt {
            messages,
            temperature: 0.0,
            max_tokens: 512,
        }
    }

    /// Checks the conversation shape: the first message is `system`, the
    /// rest strictly alternate `user`/`assistant`, and the conversation ends
    /// on the `user` turn awaiting completion. Also rejects non-finite or
    /// negative temperatures and a zero token budget.
    pub fn validate(&self) -> Result<(), LlmError> {
        let reject = |reason: &str| Err(LlmError::InvalidPrompt(reason.to_string()));
        if self.messages.is_empty() {
            return reject("no messages");
        }
        if self.messages[0].role != Role::System {
            return reject("first message must have role system");
        }
        for (i, msg) in self.messages[1..].iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if msg.role != expected {
                return reject("roles after the system message must alternate user/assistant");
            }
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return reject("conversation must end on a user turn");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return reject("temperature must be finite and nonnegative");
        }
        if self.max_tokens == 0 {
            return reject("max_tokens must be positive");
        }
        Ok(())
    }

    /// Content of the final user message, if present.
    pub fn last_user(&self) -> Option<&str> {
        match self.messages.last() {
            Some(m) if m.role == Role::User => Some(&m.content),
            _ => None,
        }
    }
}

/// Failures raised by chat-completion clients. Transport problems, timeouts,
/// exhausted retries, and malformed responses are distinct variants so
/// callers can decide what is retryable or fatal.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {seconds}s")]
    Timeout { seconds: f64 },
    #[error("rate limited (HTTP 429) after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("server error (HTTP {status}) after {attempts} attempts")]
    ServerError { status: u16, attempts: u32 },
    #[error("unexpected HTTP status {status}")]
    HttpStatus { status: u16 },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("prompt shape not recognized by the mock client")]
    UnrecognizedPrompt,
}

/// A chat-completion backend. Implementations must be safe to call from
/// several threads at once.
pub trait ChatClient: Send + Sync {
    /// Returns the assistant text completing the prompt's final user turn.
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, LlmError>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn well_formed() -> ChatPrompt {
        ChatPrompt::new(vec![
            ChatMessage::system("sys"),
            ChatMessage::user("u1"),
            ChatMessage::assistant("a1"),
            ChatMessage::user("u2"),
        ])
    }

    #[test]
    fn accepts_system_then_alternating_turns() {
        assert!(well_formed().validate().is_ok());
    }

    #[test]
    fn rejects_empty_and_misordered_conversations() {
        let cases = [
            ChatPrompt::new(vec![]),
            ChatPrompt::new(vec![ChatMessage::user("u")]),
            ChatPrompt::new(vec![ChatMessage::system("s"), ChatMessage::assistant("a")]),
            ChatPrompt::new(vec![
                ChatMessage::system("s"),
                ChatMessage::user("u"),
                ChatMessage::user("u2"),
            ]),
            ChatPrompt::new(vec![
                ChatMessage::system("s"),
                ChatMessage::user("u"),
                ChatMessage::assistant("a"),
            ]),
        ];
        for prompt in cases {
            assert!(
                matches!(prompt.validate(), Err(LlmError::InvalidPrompt(_))),
                "expected rejection for {prompt:?}"
            );
        }
    }

    #[test]
    fn rejects_bad_decoding_parameters() {
        let mut p = well_formed();
        p.temperature = f64::NAN;
        assert!(p.validate().is_err());
        let mut p = well_formed();
        p.temperature = -0.5;
        assert!(p.validate().is_err());
        let mut p = well_formed();
        p.max_tokens = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn last_user_returns_final_turn() {
        assert_eq!(well_formed().last_user(), Some("u2"));
        let ends_assistant = ChatPrompt::new(vec![
            ChatMessage::system("s"),
            ChatMessage::user("u"),
            ChatMessage::assistant("a"),
        ]);
        assert_eq!(ends_assistant.last_user(), None);
    }

    #[test]
    fn messages_serialize_with_lowercase_roles() {
        let json = serde_json::to_string(&ChatMessage::system("hi")).unwrap();
        assert_eq!(json, r#"{"role":"system","content":"hi"}"#);
    }
}
