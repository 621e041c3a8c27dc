//! Measure how much a language model *stores* versus *expresses*, and recover
//! answers it holds but does not say.
//!
//! The crate scores top-k candidate distributions with Hits@k (does a token
//! sharing at least three consecutive characters with the ground truth appear
//! among the top k candidates at the probed step?), compares that with
//! full-answer accuracy, and implements a filter-and-reprompt decoder: when
//! the greedy answer is uninformative ("unsure", empty, repetitive), the first
//! informative candidate token is appended to the prompt and the model is
//! queried again.
//!
//! Backends are interchangeable behind [`backend::LMBackend`]: an
//! OpenAI-compatible HTTP client, a logit-dump reader, and a scripted mock
//! (also servable over HTTP via [`backend::server::MockServer`]).
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod backend;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod harness;
pub mod matcher;
pub mod metrics;
pub mod recall;
pub mod report;
pub mod types;

pub use error::{Error, Result};
pub use filter::{classify_response, is_uninformative_token, FilterReason, FilterVerdict};
pub use harness::DecodeSettings;
pub use matcher::{answer_correct, longest_common_substring_len, token_matches, MatchResult};
pub use metrics::{aggregate, compute_hits_at_k, compute_rank_cdf, hit_rank, MetricsReport};
pub use recall::{batch_recall, recall_decode, select_recovery_token, RecallTrace};
pub use types::{
    normalize_text, AnswerDistribution, Bucket, EvalOutcome, MetricConfig, QARecord,
    ResponseClass, TokenCandidate,
};
