//! Types shared by every pluggable backend (encoder, scorer, navigator,
//! listwise reranker).

use serde::{Deserialize, Serialize};
use std::fmt;

/// A backend call that did not produce a usable answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendFailure {
    pub backend: String,
    pub message: String,
    /// Whether repeating the identical request may succeed.
    pub retryable: bool,
    /// Attempts made before giving up.
    pub attempts: u32,
}

impl BackendFailure {
    pub fn new(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            backend: backend.into(),
            message: message.into(),
            retryable: false,
            attempts: 1,
        }
    }

    pub fn retryable(mut self, attempts: u32) -> Self {
        self.retryable = true;
        self.attempts = attempts;
        self
    }
}

impl fmt::Display for BackendFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "backend `{}` failed after {} attempt(s): {}",
            self.backend, self.attempts, self.message
        )?;
        if self.retryable {
            write!(f, " (retryable)")?;
        }
        Ok(())
    }
}

impl std::error::Error for BackendFailure {}

/// Token counts reported by one model exchange.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    /// Model name used to look up the price in the rate table.
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(model: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            model: model.into(),
            input_tokens,
            output_tokens,
        }
    }

    /// Mock and local backends report nothing.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.input_tokens == 0 && self.output_tokens == 0
    }
}
