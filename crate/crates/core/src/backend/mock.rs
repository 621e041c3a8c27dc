use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Capability, CompletionRequest, LMBackend};
use crate::error::{Error, Result};
use crate::types::AnswerDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockCandidate {
    pub token: String,
    pub logprob: f64,
}

impl MockCandidate {
    pub fn new(token: impl Into<String>, logprob: f64) -> Self {
        Self {
            token: token.into(),
            logprob,
        }
    }
}

/// Scripted response: greedy text, candidates at the probe step, and what the
/// model continues with after each candidate is appended to the prompt.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockScript {
    pub greedy_completion: String,
    pub candidates: Vec<MockCandidate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub continuations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScript {
    pub prompt: String,
    #[serde(flatten)]
    pub script: MockScript,
}

fn default_max_top_logprobs() -> usize {
    100
}

/// Configuration of the deterministic mock model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapModelSpec {
    #[serde(default = "default_max_top_logprobs")]
    pub max_top_logprobs: usize,
    /// Answer for any prompt that matches no script.
    pub default: MockScript,
    #[serde(default)]
    pub scripts: Vec<PromptScript>,
}

impl GapModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GapModelSpec =
            serde_json::from_str(text).map_err(|e| Error::MockSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text).map_err(|e| Error::MockSpec(format!("{}: {e}", path.display())))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_top_logprobs == 0 {
            return Err(Error::MockSpec("max_top_logprobs must be positive".into()));
        }
        validate_script("default", &self.default)?;
        let mut prompts = HashSet::new();
        for s in &self.scripts {
            if !prompts.insert(s.prompt.as_str()) {
                return Err(Error::MockSpec(format!("duplicate scripted prompt {:?}", s.prompt)));
            }
            validate_script(&s.prompt, &s.script)?;
        }
        Ok(())
    }
}

fn validate_script(label: &str, script: &MockScript) -> Result<()> {
    let bad = |message: String| Error::MockSpec(format!("script {label:?}: {message}"));
    let mut seen = HashSet::new();
    for c in &script.candidates {
        if c.logprob.is_nan() || c.logprob > 0.0 {
            return Err(bad(format!("logprob {} of {:?} must be <= 0", c.logprob, c.token)));
        }
        if !seen.insert(c.token.as_str()) {
            return Err(bad(format!("duplicate candidate {:?}", c.token)));
        }
    }
    if script.candidates.windows(2).any(|w| w[0].logprob < w[1].logprob) {
        return Err(bad("candidates must be sorted by logprob descending".into()));
    }
    if let Some(key) = script.continuations.keys().find(|k| !seen.contains(k.as_str())) {
        return Err(bad(format!("continuation key {key:?} is not a candidate")));
    }
    Ok(())
}

fn scripted_distribution(
    script: &MockScript,
    request: &CompletionRequest<'_>,
    max_top_logprobs: usize,
) -> Result<AnswerDistribution> {
    let candidates = script
        .candidates
        .iter()
        .map(|c| (c.token.clone(), c.logprob))
        .collect();
    let (dist, _) = AnswerDistribution::from_unsorted(
        request.record_id,
        request.probe_position,
        candidates,
        script.greedy_completion.clone(),
    )?;
    Ok(dist.truncated(request.top_k.min(max_top_logprobs)))
}

fn continuation_distribution(
    continuation: &str,
    request: &CompletionRequest<'_>,
) -> Result<AnswerDistribution> {
    // The re-prompted model is certain of its continuation.
    AnswerDistribution::new(
        request.record_id,
        request.probe_position,
        if request.top_k == 0 {
            Vec::new()
        } else {
            vec![(continuation.to_string(), 0.0)]
        },
        continuation,
    )
}

/// Resolves a prompt against a mock spec without building an index.
///
/// Exact prompt match first, then the re-prompt shape (a scripted prompt
/// followed by one of its candidates' token text), then the default script.
/// `max_tokens` is accepted for interface parity; scripted text is returned whole.
pub fn mock_complete(
    prompt: &str,
    top_k: usize,
    max_tokens: usize,
    spec: &GapModelSpec,
) -> Result<AnswerDistribution> {
    let request = CompletionRequest {
        record_id: "",
        prompt,
        top_k,
        max_tokens,
        probe_position: 0,
    };
    if let Some(s) = spec.scripts.iter().find(|s| s.prompt == prompt) {
        return scripted_distribution(&s.script, &request, spec.max_top_logprobs);
    }
    for s in &spec.scripts {
        if let Some(rest) = prompt.strip_prefix(s.prompt.as_str()) {
            if let Some(cont) = s.script.continuations.get(rest) {
                return continuation_distribution(cont, &request);
            }
        }
    }
    scripted_distribution(&spec.default, &request, spec.max_top_logprobs)
}

/// Indexed, thread-safe mock backend.
#[derive(Debug, Clone)]
pub struct MockBackend {
    spec: GapModelSpec,
    by_prompt: HashMap<String, usize>,
    reprompts: HashMap<String, String>,
}

impl MockBackend {
    pub fn new(spec: GapModelSpec) -> Result<Self> {
        spec.validate()?;
        let by_prompt = spec
            .scripts
            .iter()
            .enumerate()
            .map(|(i, s)| (s.prompt.clone(), i))
            .collect();
        let mut reprompts = HashMap::new();
        // scan order matches mock_complete: first script wins
        for s in &spec.scripts {
            for (token, cont) in &s.script.continuations {
                reprompts
                    .entry(format!("{}{}", s.prompt, token))
                    .or_insert_with(|| cont.clone());
            }
        }
        Ok(Self {
            spec,
            by_prompt,
            reprompts,
        })
    }

    pub fn spec(&self) -> &GapModelSpec {
        &self.spec
    }
}

impl LMBackend for MockBackend {
    fn capability(&self) -> Capability {
        Capability {
            max_top_logprobs: self.spec.max_top_logprobs,
            supports_echo: false,
        }
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<AnswerDistribution> {
        if let Some(&i) = self.by_prompt.get(request.prompt) {
            return scripted_distribution(
                &self.spec.scripts[i].script,
                request,
                self.spec.max_top_logprobs,
            );
        }
        if let Some(cont) = self.reprompts.get(request.prompt) {
            return continuation_distribution(cont, request);
        }
        scripted_distribution(&self.spec.default, request, self.spec.max_top_logprobs)
    }

    fn describe(&self) -> String {
        format!(
            "mock(scripts={}, max_top_logprobs={})",
            self.spec.scripts.len(),
            self.spec.max_top_logprobs
        )
    }
}
