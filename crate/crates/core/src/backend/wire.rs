//! OpenAI-compatible `/v1/completions` wire format, shared by the HTTP client
//! and the mock server.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LogBase;
use crate::error::{Error, Result};
use crate::types::AnswerDistribution;

pub const COMPLETIONS_PATH: &str = "/v1/completions";

/// Request body. Field order is fixed so bodies are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    /// Number of top alternatives requested per generated position.
    pub logprobs: usize,
}

impl CompletionBody {
    pub fn greedy(model: Option<String>, prompt: &str, max_tokens: usize, top_k: usize) -> Self {
        Self {
            model,
            prompt: prompt.to_string(),
            max_tokens,
            temperature: 0.0,
            logprobs: top_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionLogprobs {
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<Option<f64>>,
    pub top_logprobs: Vec<BTreeMap<String, f64>>,
    pub text_offset: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionChoice {
    pub index: usize,
    pub text: String,
    pub logprobs: Option<CompletionLogprobs>,
    pub finish_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub id: String,
    pub object: String,
    pub model: String,
    pub choices: Vec<CompletionChoice>,
}

impl CompletionResponse {
    /// Renders a distribution as a single-position completion response.
    pub fn from_distribution(dist: &AnswerDistribution, model: &str) -> Self {
        let top: BTreeMap<String, f64> = dist
            .candidates()
            .iter()
            .map(|c| (c.token_text.clone(), c.logprob))
            .collect();
        let (tokens, token_logprobs) = match dist.candidates().first() {
            Some(c) => (vec![c.token_text.clone()], vec![Some(c.logprob)]),
            None => (vec![String::new()], vec![None]),
        };
        Self {
            id: "cmpl-mock".into(),
            object: "text_completion".into(),
            model: model.into(),
            choices: vec![CompletionChoice {
                index: 0,
                text: dist.greedy_completion().to_string(),
                logprobs: Some(CompletionLogprobs {
                    tokens,
                    token_logprobs,
                    top_logprobs: vec![top],
                    text_offset: vec![0],
                }),
                finish_reason: "stop".into(),
            }],
        }
    }
}

/// Extracts the candidate list at `probe_position` from a completion response.
///
/// Validation is done on the raw JSON so that each missing piece produces a
/// precise schema error. Logprobs are converted to natural log.
pub fn parse_completion_response(
    body: &Value,
    record_id: &str,
    probe_position: usize,
    top_k: usize,
    base: LogBase,
) -> Result<AnswerDistribution> {
    let schema = |msg: String| Error::Schema(msg);
    let choice = body
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| schema("missing choices[0]".into()))?;
    let text = choice
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("choices[0].text missing or not a string".into()))?;
    let logprobs = choice
        .get("logprobs")
        .filter(|v| !v.is_null())
        .ok_or_else(|| schema("choices[0].logprobs missing".into()))?;
    let positions = logprobs
        .get("top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("choices[0].logprobs.top_logprobs missing".into()))?;
    let at_probe = positions.get(probe_position).ok_or_else(|| {
        schema(format!(
            "top_logprobs has {} position(s); probe position {probe_position} unavailable",
            positions.len()
        ))
    })?;
    let entries = at_probe.as_object().ok_or_else(|| {
        schema(format!("top_logprobs[{probe_position}] is not an object"))
    })?;
    let mut candidates = Vec::with_capacity(entries.len());
    for (token, lp) in entries {
        let lp = lp.as_f64().ok_or_else(|| {
            schema(format!("logprob for {token:?} is not a number"))
        })?;
        candidates.push((token.clone(), base.to_natural(lp)));
    }
    let (dist, _) = AnswerDistribution::from_unsorted(record_id, probe_position, candidates, text)?;
    Ok(dist.truncated(top_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn temperature_serializes_as_float() {
        let body = CompletionBody::greedy(None, "Q:", 8, 5);
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"prompt":"Q:","max_tokens":8,"temperature":0.0,"logprobs":5}"#
        );
    }

    #[test]
    fn missing_logprobs_is_schema_error() {
        let body = json!({"choices": [{"text": "x", "index": 0}]});
        let err = parse_completion_response(&body, "q", 0, 5, LogBase::Natural).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn probe_position_out_of_range() {
        let body = json!({"choices": [{"text": "x", "logprobs": {"top_logprobs": [{"x": -0.1}]}}]});
        assert!(parse_completion_response(&body, "q", 1, 5, LogBase::Natural).is_err());
        let d = parse_completion_response(&body, "q", 0, 5, LogBase::Natural).unwrap();
        assert_eq!(d.k_available(), 1);
    }

    #[test]
    fn base_ten_converted() {
        let body = json!({"choices": [{"text": "x", "logprobs": {"top_logprobs": [{"x": -1.0}]}}]});
        let d = parse_completion_response(&body, "q", 0, 5, LogBase::Ten).unwrap();
        assert_eq!(d.candidates()[0].logprob, -std::f64::consts::LN_10);
    }

    #[test]
    fn response_round_trip() {
        let dist = AnswerDistribution::new(
            "q",
            0,
            vec![("unsure".into(), -0.1), (" Olymp".into(), -1.2)],
            "unsure",
        )
        .unwrap();
        let resp = CompletionResponse::from_distribution(&dist, "mock");
        let value = serde_json::to_value(&resp).unwrap();
        let back = parse_completion_response(&value, "q", 0, 10, LogBase::Natural).unwrap();
        assert_eq!(back, dist);
    }
}
