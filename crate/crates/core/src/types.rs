//! Shared domain model: questions, candidate distributions, outcomes and
//! metric configuration.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Canonical text form used by every string comparison in the crate.
///
/// NFC composition, lowercasing, trimming and collapsing internal whitespace
/// runs to a single space. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    let composed: String = lowered.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Popularity bucket of the entity a question is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Head,
    Torso,
    Tail,
    Unassigned,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Head => "head",
            Bucket::Torso => "torso",
            Bucket::Tail => "tail",
            Bucket::Unassigned => "unassigned",
        }
    }
}

impl Default for Bucket {
    fn default() -> Self {
        Bucket::Unassigned
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "head" => Ok(Bucket::Head),
            "torso" => Ok(Bucket::Torso),
            "tail" => Ok(Bucket::Tail),
            "" | "unassigned" => Ok(Bucket::Unassigned),
            other => Err(Error::Config(format!("unknown bucket {other:?}"))),
        }
    }
}

/// One question with its acceptable answers and popularity metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub record_id: String,
    pub question: String,
    /// Full prompt text sent to the model, verbatim.
    pub prompt: String,
    /// Acceptable ground-truth strings; aliases allowed.
    pub answers: Vec<String>,
    pub entity_id: String,
    pub popularity: f64,
    #[serde(default)]
    pub bucket: Bucket,
}

impl QARecord {
    /// Checks the per-record invariants (non-empty answers, no blank alias,
    /// finite non-negative popularity).
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: &str| Error::InvalidRecord {
            record_id: self.record_id.clone(),
            message: message.to_string(),
        };
        if self.record_id.is_empty() {
            return Err(invalid("record_id is empty"));
        }
        if self.answers.is_empty() {
            return Err(invalid("answers list is empty"));
        }
        if self.answers.iter().any(|a| normalize_text(a).is_empty()) {
            return Err(invalid("answers contain an empty string"));
        }
        if !self.popularity.is_finite() || self.popularity < 0.0 {
            return Err(invalid("popularity must be a finite non-negative number"));
        }
        Ok(())
    }
}

/// A vocabulary token observed at the probed decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCandidate {
    /// Surface string exactly as the backend reported it.
    pub token_text: String,
    /// Natural-log probability (or an ordinal score when only ranks exist).
    pub logprob: f64,
    /// 1-based.
    pub rank: usize,
}

/// Total order over candidates: logprob descending, then token text by byte order.
pub fn candidate_order(a_text: &str, a_logprob: f64, b_text: &str, b_logprob: f64) -> Ordering {
    b_logprob
        .total_cmp(&a_logprob)
        .then_with(|| a_text.as_bytes().cmp(b_text.as_bytes()))
}

fn canonical_logprob(logprob: f64) -> f64 {
    // total_cmp separates -0.0 from 0.0
    if logprob == 0.0 {
        0.0
    } else {
        logprob
    }
}

/// Ordered top-k candidate list for one record at one decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct AnswerDistribution {
    record_id: String,
    probe_position: usize,
    candidates: Vec<TokenCandidate>,
    greedy_completion: String,
}

#[derive(Deserialize)]
struct RawDistribution {
    record_id: String,
    probe_position: usize,
    candidates: Vec<TokenCandidate>,
    greedy_completion: String,
}

impl TryFrom<RawDistribution> for AnswerDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        for (i, c) in raw.candidates.iter().enumerate() {
            if c.rank != i + 1 {
                return Err(Error::InvalidDistribution {
                    record_id: raw.record_id,
                    message: format!("rank {} at position {}", c.rank, i + 1),
                });
            }
        }
        AnswerDistribution::new(
            raw.record_id,
            raw.probe_position,
            raw.candidates
                .into_iter()
                .map(|c| (c.token_text, c.logprob))
                .collect(),
            raw.greedy_completion,
        )
    }
}

impl AnswerDistribution {
    /// Builds a distribution from candidates that must already be in
    /// canonical order. Ranks are assigned from list position.
    pub fn new(
        record_id: impl Into<String>,
        probe_position: usize,
        candidates: Vec<(String, f64)>,
        greedy_completion: impl Into<String>,
    ) -> Result<Self> {
        let record_id = record_id.into();
        if let Some(bad) = candidates.iter().find(|(_, lp)| lp.is_nan()) {
            return Err(Error::InvalidDistribution {
                record_id,
                message: format!("NaN logprob for token {:?}", bad.0),
            });
        }
        let candidates: Vec<(String, f64)> = candidates
            .into_iter()
            .map(|(t, lp)| (t, canonical_logprob(lp)))
            .collect();
        if let Some(i) = candidates
            .windows(2)
            .position(|w| candidate_order(&w[0].0, w[0].1, &w[1].0, w[1].1) == Ordering::Greater)
        {
            return Err(Error::InvalidDistribution {
                record_id,
                message: format!(
                    "candidates not in canonical order at rank {} ({:?} {} before {:?} {})",
                    i + 2,
                    candidates[i].0,
                    candidates[i].1,
                    candidates[i + 1].0,
                    candidates[i + 1].1
                ),
            });
        }
        Ok(Self::from_sorted(
            record_id,
            probe_position,
            candidates,
            greedy_completion.into(),
        ))
    }

    /// Sorts candidates into canonical order. The flag reports whether the
    /// input order differed from the canonical one.
    pub fn from_unsorted(
        record_id: impl Into<String>,
        probe_position: usize,
        candidates: Vec<(String, f64)>,
        greedy_completion: impl Into<String>,
    ) -> Result<(Self, bool)> {
        let record_id = record_id.into();
        if let Some(bad) = candidates.iter().find(|(_, lp)| lp.is_nan()) {
            return Err(Error::InvalidDistribution {
                record_id,
                message: format!("NaN logprob for token {:?}", bad.0),
            });
        }
        let original: Vec<(String, f64)> = candidates
            .into_iter()
            .map(|(t, lp)| (t, canonical_logprob(lp)))
            .collect();
        let mut sorted = original.clone();
        sorted.sort_by(|a, b| candidate_order(&a.0, a.1, &b.0, b.1));
        let resorted = sorted != original;
        let dist = Self::new(record_id, probe_position, sorted, greedy_completion)?;
        Ok((dist, resorted))
    }

    fn from_sorted(
        record_id: String,
        probe_position: usize,
        candidates: Vec<(String, f64)>,
        greedy_completion: String,
    ) -> Self {
        let candidates = candidates
            .into_iter()
            .enumerate()
            .map(|(i, (token_text, logprob))| TokenCandidate {
                token_text,
                logprob,
                rank: i + 1,
            })
            .collect();
        Self {
            record_id,
            probe_position,
            candidates,
            greedy_completion,
        }
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn probe_position(&self) -> usize {
        self.probe_position
    }

    pub fn candidates(&self) -> &[TokenCandidate] {
        &self.candidates
    }

    pub fn greedy_completion(&self) -> &str {
        &self.greedy_completion
    }

    /// Number of candidates the backend supplied.
    pub fn k_available(&self) -> usize {
        self.candidates.len()
    }

    /// Same distribution relabelled for another record.
    pub fn with_record_id(mut self, record_id: impl Into<String>) -> Self {
        self.record_id = record_id.into();
        self
    }

    /// Keeps only the first `k` candidates.
    pub fn truncated(mut self, k: usize) -> Self {
        self.candidates.truncate(k);
        self
    }
}

/// Three-way classification of a final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseClass {
    Correct,
    Wrong,
    Uninformative,
}

impl ResponseClass {
    pub const ALL: [ResponseClass; 3] = [
        ResponseClass::Correct,
        ResponseClass::Wrong,
        ResponseClass::Uninformative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResponseClass::Correct => "correct",
            ResponseClass::Wrong => "wrong",
            ResponseClass::Uninformative => "uninformative",
        }
    }
}

impl fmt::Display for ResponseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-record scoring result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub record_id: String,
    pub response_class: ResponseClass,
    /// Smallest matching rank within the available candidates.
    pub hit_rank: Option<usize>,
    pub final_answer: String,
}

/// Parameters of the repetition heuristic used to spot degenerate answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRule {
    pub max_period: usize,
    pub min_repeats: usize,
    /// Fraction of the normalized answer the repeated region must cover.
    pub min_coverage: f64,
}

impl Default for RepetitionRule {
    fn default() -> Self {
        Self {
            max_period: 8,
            min_repeats: 4,
            min_coverage: 0.8,
        }
    }
}

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Parses a stop-word list: one word per line, `#` starts a comment.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .map(normalize_text)
        .filter(|w| !w.is_empty())
        .collect()
}

/// The bundled English function-word list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// Knobs shared by matching, filtering, metrics and partitioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub k_values: Vec<usize>,
    pub min_match_len: usize,
    pub uninformative_prefixes: Vec<String>,
    pub min_token_len: usize,
    pub stopword_list: BTreeSet<String>,
    pub head_fraction: f64,
    pub torso_fraction: f64,
    pub repetition: RepetitionRule,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 5, 50, 100],
            min_match_len: 3,
            uninformative_prefixes: vec!["uns".to_string()],
            min_token_len: 3,
            stopword_list: default_stopwords(),
            head_fraction: 0.10,
            torso_fraction: 0.40,
            repetition: RepetitionRule::default(),
        }
    }
}

impl MetricConfig {
    pub fn with_k_values(mut self, k_values: Vec<usize>) -> Self {
        self.k_values = k_values;
        self
    }

    /// Largest configured k.
    pub fn max_k(&self) -> usize {
        self.k_values.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values is empty".into()));
        }
        if self.k_values[0] == 0 {
            return Err(Error::Config("k values must be positive".into()));
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("k_values must be strictly increasing".into()));
        }
        if self.min_match_len == 0 || self.min_token_len == 0 {
            return Err(Error::Config(
                "min_match_len and min_token_len must be positive".into(),
            ));
        }
        if !(self.head_fraction > 0.0 && self.head_fraction <= 1.0) {
            return Err(Error::Config("head_fraction must lie in (0, 1]".into()));
        }
        if !(self.torso_fraction >= 0.0 && self.torso_fraction < 1.0) {
            return Err(Error::Config("torso_fraction must lie in [0, 1)".into()));
        }
        if self.head_fraction + self.torso_fraction > 1.0 + 1e-12 {
            return Err(Error::Config(
                "head_fraction + torso_fraction must not exceed 1".into(),
            ));
        }
        let rep = &self.repetition;
        if rep.max_period == 0 || rep.min_repeats == 0 || !(0.0..=1.0).contains(&rep.min_coverage)
        {
            return Err(Error::Config("invalid repetition rule".into()));
        }
        Ok(())
    }
}
