//! Interchangeable sources of top-k candidate distributions.
//!
//! [`LMBackend`] is implemented by the live [`HttpBackend`] (OpenAI-compatible
//! completions with `logprobs`), the offline [`DumpBackend`] that replays an
//! exported logit dump, and the scripted [`MockBackend`].

mod dump;
mod http;
mod mock;
pub mod server;
pub mod wire;

pub use dump::{read_logit_dump, write_logit_dump, DumpBackend, DumpReadout};
pub use http::{http_complete, EndpointConfig, HttpBackend, LogBase, API_KEY_ENV};
pub use mock::{mock_complete, GapModelSpec, MockBackend, MockCandidate, MockScript, PromptScript};

use crate::error::Result;
use crate::types::AnswerDistribution;

/// What a backend can serve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capability {
    pub max_top_logprobs: usize,
    pub supports_echo: bool,
}

/// One greedy completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest<'a> {
    /// Labels the returned distribution; the dump backend also looks it up.
    pub record_id: &'a str,
    pub prompt: &'a str,
    pub top_k: usize,
    pub max_tokens: usize,
    /// Decoding step whose candidates are returned.
    pub probe_position: usize,
}

/// A source of greedy completions with top-k candidates.
///
/// Implementations return at most `min(top_k, max_top_logprobs)` candidates
/// in canonical order, labelled with the request's record id.
pub trait LMBackend: Send + Sync {
    fn capability(&self) -> Capability;

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<AnswerDistribution>;

    /// Short stable description recorded in run manifests.
    fn describe(&self) -> String;
}

impl<B: LMBackend + ?Sized> LMBackend for &B {
    fn capability(&self) -> Capability {
        (**self).capability()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<AnswerDistribution> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: LMBackend + ?Sized> LMBackend for Box<B> {
    fn capability(&self) -> Capability {
        (**self).capability()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<AnswerDistribution> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
