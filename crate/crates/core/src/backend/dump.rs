use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{Capability, CompletionRequest, LMBackend, LogBase};
use crate::error::{Error, Result};
use crate::types::AnswerDistribution;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DumpCandidate {
    token: String,
    logprob: f64,
}

/// One line of a logit dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DumpLine {
    record_id: String,
    probe_position: usize,
    greedy_completion: String,
    candidates: Vec<DumpCandidate>,
    /// Optional: completion after each candidate is appended to the prompt.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    continuations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
pub struct DumpReadout {
    pub distributions: BTreeMap<String, AnswerDistribution>,
    pub continuations: BTreeMap<String, BTreeMap<String, String>>,
    /// Records whose candidates had to be re-sorted.
    pub resorted: Vec<String>,
}

/// Reads a JSONL logit dump.
///
/// Candidates must be in canonical order (logprob descending, ties by token
/// bytes) unless `fix_order` is set, in which case they are re-sorted and the
/// record is listed in [`DumpReadout::resorted`].
pub fn read_logit_dump(path: &Path, fix_order: bool, log_base: LogBase) -> Result<DumpReadout> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = DumpReadout::default();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let parsed: DumpLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(&first_line) = first_seen.get(&parsed.record_id) {
            return Err(Error::DuplicateRecord {
                path: path.to_path_buf(),
                record_id: parsed.record_id,
                first_line,
                second_line: line_no,
            });
        }
        first_seen.insert(parsed.record_id.clone(), line_no);

        let candidates = parsed
            .candidates
            .into_iter()
            .map(|c| (c.token, log_base.to_natural(c.logprob)))
            .collect();
        let (dist, resorted) = AnswerDistribution::from_unsorted(
            parsed.record_id.clone(),
            parsed.probe_position,
            candidates,
            parsed.greedy_completion,
        )
        .map_err(|e| parse_err(e.to_string()))?;
        if resorted {
            if !fix_order {
                return Err(parse_err(format!(
                    "candidates for {:?} are not sorted by logprob descending (use --fix-order)",
                    parsed.record_id
                )));
            }
            warn!(record_id = %parsed.record_id, line = line_no, "re-sorted candidate list");
            out.resorted.push(parsed.record_id.clone());
        }
        if !parsed.continuations.is_empty() {
            out.continuations
                .insert(parsed.record_id.clone(), parsed.continuations);
        }
        out.distributions.insert(parsed.record_id, dist);
    }
    Ok(out)
}

/// Writes distributions as a JSONL dump in record-id order.
pub fn write_logit_dump<'a>(
    path: &Path,
    distributions: impl IntoIterator<Item = &'a AnswerDistribution>,
    continuations: &BTreeMap<String, BTreeMap<String, String>>,
) -> Result<()> {
    let mut sorted: Vec<&AnswerDistribution> = distributions.into_iter().collect();
    sorted.sort_by(|a, b| a.record_id().cmp(b.record_id()));
    let file =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for d in sorted {
        let line = DumpLine {
            record_id: d.record_id().to_string(),
            probe_position: d.probe_position(),
            greedy_completion: d.greedy_completion().to_string(),
            candidates: d
                .candidates()
                .iter()
                .map(|c| DumpCandidate {
                    token: c.token_text.clone(),
                    logprob: c.logprob,
                })
                .collect(),
            continuations: continuations.get(d.record_id()).cloned().unwrap_or_default(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Replays a logit dump as a backend.
///
/// Lookups are by record id. When the record's original prompt is registered,
/// a request whose prompt is that prompt plus a candidate token is answered
/// from the dump's `continuations`; any other prompt is refused.
#[derive(Debug, Clone)]
pub struct DumpBackend {
    readout: DumpReadout,
    prompts: HashMap<String, String>,
}

impl DumpBackend {
    pub fn new(readout: DumpReadout) -> Self {
        Self {
            readout,
            prompts: HashMap::new(),
        }
    }

    pub fn with_prompts<'a>(mut self, prompts: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        self.prompts = prompts
            .into_iter()
            .map(|(id, p)| (id.to_string(), p.to_string()))
            .collect();
        self
    }

    pub fn readout(&self) -> &DumpReadout {
        &self.readout
    }

    fn depth(&self) -> usize {
        self.readout
            .distributions
            .values()
            .map(AnswerDistribution::k_available)
            .max()
            .unwrap_or(0)
    }
}

impl LMBackend for DumpBackend {
    fn capability(&self) -> Capability {
        Capability {
            max_top_logprobs: self.depth(),
            supports_echo: false,
        }
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<AnswerDistribution> {
        let dist = self
            .readout
            .distributions
            .get(request.record_id)
            .ok_or_else(|| Error::Unsupported {
                backend: "dump",
                message: format!("no dump entry for record {:?}", request.record_id),
            })?;
        if let Some(original) = self.prompts.get(request.record_id) {
            if request.prompt != original {
                let appended = request.prompt.strip_prefix(original.as_str());
                let continuation = appended.and_then(|token| {
                    self.readout
                        .continuations
                        .get(request.record_id)
                        .and_then(|c| c.get(token))
                });
                return match continuation {
                    Some(text) => AnswerDistribution::new(
                        request.record_id,
                        request.probe_position,
                        vec![(text.clone(), 0.0)],
                        text.clone(),
                    ),
                    None => Err(Error::Unsupported {
                        backend: "dump",
                        message: format!(
                            "no recorded continuation for re-prompt of {:?}",
                            request.record_id
                        ),
                    }),
                };
            }
        }
        if dist.probe_position() != request.probe_position {
            return Err(Error::Unsupported {
                backend: "dump",
                message: format!(
                    "dump holds probe position {} but {} was requested",
                    dist.probe_position(),
                    request.probe_position
                ),
            });
        }
        Ok(dist.clone().truncated(request.top_k))
    }

    fn describe(&self) -> String {
        format!("dump(records={})", self.readout.distributions.len())
    }
}
