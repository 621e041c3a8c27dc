//! Uninformative-token filter and uninformative-response classifier.

use serde::{Deserialize, Serialize};

use crate::types::{normalize_text, MetricConfig, RepetitionRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    UnsPrefix,
    Empty,
    TooShort,
    StopwordOnly,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub uninformative: bool,
    pub reason: FilterReason,
}

impl FilterVerdict {
    fn from_reason(reason: FilterReason) -> Self {
        Self {
            uninformative: reason != FilterReason::None,
            reason,
        }
    }
}

/// Response-level classification used before correctness is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Informative,
    Uninformative,
}

fn has_uninformative_prefix(normalized: &str, config: &MetricConfig) -> bool {
    config
        .uninformative_prefixes
        .iter()
        .map(|p| normalize_text(p))
        .any(|p| !p.is_empty() && normalized.starts_with(p.as_str()))
}

/// Applies the token rules in fixed precedence: empty, prefix, length, stop words.
pub fn is_uninformative_token(token: &str, config: &MetricConfig) -> FilterVerdict {
    let normalized = normalize_text(token);
    let reason = if normalized.is_empty() {
        FilterReason::Empty
    } else if has_uninformative_prefix(&normalized, config) {
        FilterReason::UnsPrefix
    } else if normalized.chars().count() < config.min_token_len {
        FilterReason::TooShort
    } else if normalized
        .split(' ')
        .all(|w| config.stopword_list.contains(w))
    {
        FilterReason::StopwordOnly
    } else {
        FilterReason::None
    };
    FilterVerdict::from_reason(reason)
}

/// Length in chars of the largest region covered by back-to-back copies of a
/// single short unit, counting only units that repeat at least
/// `rule.min_repeats` times.
///
/// For each period `p` a run where `s[j] == s[j + p]` holds for `m`
/// consecutive `j` is a `p`-periodic stretch of `m + p` chars holding
/// `(m + p) / p` whole copies.
pub fn longest_repeated_region(chars: &[char], rule: &RepetitionRule) -> usize {
    let n = chars.len();
    let mut best = 0;
    for period in 1..=rule.max_period.min(n) {
        let mut run = 0usize;
        for j in 0..=n - period {
            let continues = j + period < n && chars[j] == chars[j + period];
            if continues {
                run += 1;
            } else {
                let copies = (run + period) / period;
                if copies >= rule.min_repeats {
                    best = best.max(copies * period);
                }
                run = 0;
            }
        }
    }
    best
}

/// Whether an answer is degenerate repetition under `rule`.
pub fn is_repetitive(normalized: &str, rule: &RepetitionRule) -> bool {
    let chars: Vec<char> = normalized.chars().collect();
    if chars.is_empty() {
        return false;
    }
    let region = longest_repeated_region(&chars, rule);
    region > 0 && region as f64 >= rule.min_coverage * chars.len() as f64
}

/// Empty answers, "unsure"-style answers and degenerate repetition are
/// uninformative.
pub fn classify_response(final_answer: &str, config: &MetricConfig) -> ResponseKind {
    let normalized = normalize_text(final_answer);
    if normalized.is_empty()
        || has_uninformative_prefix(&normalized, config)
        || is_repetitive(&normalized, &config.repetition)
    {
        ResponseKind::Uninformative
    } else {
        ResponseKind::Informative
    }
}
