//! Filter-and-reprompt answer recovery.
//!
//! When the greedy answer is uninformative (e.g. "unsure"), walk the probed
//! candidate list in rank order, skip every uninformative token, append the
//! first informative one to the original prompt, and ask the model again.
//! Because the list is probability-sorted, the first informative token is the
//! argmax over the filtered candidate set.

use serde::{Deserialize, Serialize};

use crate::backend::LMBackend;
use crate::error::{Error, Result};
use crate::filter::{classify_response, is_uninformative_token, FilterVerdict, ResponseKind};
use crate::harness::{ensure_partitioned, query_record, run_parallel, DecodeSettings, RecordFailure};
use crate::metrics::{aggregate, classify_outcome, evaluate_record, hit_rank, MetricsReport};
use crate::types::{AnswerDistribution, EvalOutcome, MetricConfig, QARecord, TokenCandidate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedToken {
    pub candidate: TokenCandidate,
    pub verdict: FilterVerdict,
}

/// Audit record of one recovery attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallTrace {
    pub record_id: String,
    /// The maximal uninformative prefix of the candidate list, in rank order.
    pub skipped: Vec<SkippedToken>,
    pub selected: Option<TokenCandidate>,
    pub new_prompt: String,
    pub new_completion: Option<String>,
    /// No informative candidate existed; the original answer was kept.
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoverySelection {
    pub selected: Option<TokenCandidate>,
    pub skipped: Vec<SkippedToken>,
}

/// Skips the uninformative head of the candidate list and returns the first
/// informative candidate, if any.
pub fn select_recovery_token(
    dist: &AnswerDistribution,
    config: &MetricConfig,
) -> Result<RecoverySelection> {
    if dist.candidates().is_empty() {
        return Err(Error::NoCandidates {
            record_id: dist.record_id().to_string(),
        });
    }
    let mut skipped = Vec::new();
    for candidate in dist.candidates() {
        let verdict = is_uninformative_token(&candidate.token_text, config);
        if !verdict.uninformative {
            return Ok(RecoverySelection {
                selected: Some(candidate.clone()),
                skipped,
            });
        }
        skipped.push(SkippedToken {
            candidate: candidate.clone(),
            verdict,
        });
    }
    Ok(RecoverySelection {
        selected: None,
        skipped,
    })
}

/// Everything produced while decoding one record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDecode {
    pub distribution: AnswerDistribution,
    /// Greedy answer scored as-is.
    pub baseline: EvalOutcome,
    /// Answer after recovery.
    pub recovered: EvalOutcome,
    pub trace: RecallTrace,
    pub backend_calls: usize,
}

/// Runs recovery for one record, keeping the baseline outcome alongside.
pub fn decode_record(
    record: &QARecord,
    backend: &dyn LMBackend,
    config: &MetricConfig,
    settings: &DecodeSettings,
) -> Result<RecordDecode> {
    let dist = query_record(record, backend, settings)?;
    let baseline = evaluate_record(record, &dist, config)?;
    let greedy = dist.greedy_completion();
    let mut trace = RecallTrace {
        record_id: record.record_id.clone(),
        skipped: Vec::new(),
        selected: None,
        new_prompt: record.prompt.clone(),
        new_completion: None,
        fallback_used: false,
    };

    let needs_recovery = settings.always_recover
        || classify_response(greedy, config) == ResponseKind::Uninformative;
    if !needs_recovery {
        return Ok(RecordDecode {
            recovered: baseline.clone(),
            distribution: dist,
            baseline,
            trace,
            backend_calls: 1,
        });
    }

    let selection = select_recovery_token(&dist, config)?;
    trace.skipped = selection.skipped;
    let Some(token) = selection.selected else {
        trace.fallback_used = true;
        return Ok(RecordDecode {
            recovered: baseline.clone(),
            distribution: dist,
            baseline,
            trace,
            backend_calls: 1,
        });
    };

    trace.new_prompt = format!("{}{}", record.prompt, token.token_text);
    let second = backend
        .complete(&settings.request(&record.record_id, &trace.new_prompt))
        .map_err(|e| e.for_record(&record.record_id))?;
    let continuation = second.greedy_completion().to_string();
    let final_answer = format!("{}{}", token.token_text, continuation);
    trace.new_completion = Some(continuation);
    trace.selected = Some(token);

    let recovered = EvalOutcome {
        record_id: record.record_id.clone(),
        response_class: classify_outcome(&final_answer, record, config),
        hit_rank: hit_rank(&dist, record, config)?,
        final_answer,
    };
    Ok(RecordDecode {
        distribution: dist,
        baseline,
        recovered,
        trace,
        backend_calls: 2,
    })
}

/// Decodes one record with recovery and returns the scored outcome and trace.
pub fn recall_decode(
    record: &QARecord,
    backend: &dyn LMBackend,
    config: &MetricConfig,
    settings: &DecodeSettings,
) -> Result<(EvalOutcome, RecallTrace)> {
    let decoded = decode_record(record, backend, config, settings)?;
    Ok((decoded.recovered, decoded.trace))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub records: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub backend_calls: usize,
    pub second_queries: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub baseline: EvalOutcome,
    pub recovered: EvalOutcome,
    pub trace: RecallTrace,
}

#[derive(Debug, Clone)]
pub struct BatchRecall {
    /// Successful records, sorted by record id.
    pub results: Vec<RecallResult>,
    /// Greedy-only report; `None` when every record failed.
    pub before: Option<MetricsReport>,
    pub after: Option<MetricsReport>,
    pub failures: Vec<RecordFailure>,
    pub stats: BatchStats,
}

/// Baseline and recovered reports from one pass over `records`.
///
/// At most two backend calls per record. Records that fail are excluded from
/// both reports and listed in `failures`.
pub fn batch_recall(
    records: &[QARecord],
    backend: &dyn LMBackend,
    config: &MetricConfig,
    settings: &DecodeSettings,
    concurrency: usize,
) -> Result<BatchRecall> {
    config.validate()?;
    ensure_partitioned(records)?;
    let decoded = run_parallel(records, concurrency, |record| {
        decode_record(record, backend, config, settings)
    });

    let mut ok: Vec<(&QARecord, RecordDecode)> = Vec::new();
    let mut failures = Vec::new();
    for (record, result) in records.iter().zip(decoded) {
        match result {
            Ok(d) => ok.push((record, d)),
            Err(e) => failures.push(RecordFailure::new(&record.record_id, e)),
        }
    }
    ok.sort_by(|a, b| a.0.record_id.cmp(&b.0.record_id));
    failures.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let stats = BatchStats {
        records: records.len(),
        succeeded: ok.len(),
        failed: failures.len(),
        backend_calls: ok.iter().map(|(_, d)| d.backend_calls).sum(),
        second_queries: ok.iter().filter(|(_, d)| d.backend_calls > 1).count(),
        fallbacks: ok.iter().filter(|(_, d)| d.trace.fallback_used).count(),
    };

    let (before, after) = if ok.is_empty() {
        (None, None)
    } else {
        let kept: Vec<QARecord> = ok.iter().map(|(r, _)| (*r).clone()).collect();
        let dists: Vec<AnswerDistribution> =
            ok.iter().map(|(_, d)| d.distribution.clone()).collect();
        let baseline: Vec<EvalOutcome> = ok.iter().map(|(_, d)| d.baseline.clone()).collect();
        let recovered: Vec<EvalOutcome> = ok.iter().map(|(_, d)| d.recovered.clone()).collect();
        (
            Some(aggregate(&kept, &dists, &baseline, config)?),
            Some(aggregate(&kept, &dists, &recovered, config)?),
        )
    };

    let results = ok
        .into_iter()
        .map(|(_, d)| RecallResult {
            baseline: d.baseline,
            recovered: d.recovered,
            trace: d.trace,
        })
        .collect();
    Ok(BatchRecall {
        results,
        before,
        after,
        failures,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{GapModelSpec, MockBackend, MockCandidate, MockScript, PromptScript};
    use crate::filter::FilterReason;
    use crate::types::{Bucket, ResponseClass};
    use std::collections::BTreeMap;

    const PROMPT: &str = "Q: What is the capital of Washington? Answer unsure if you do not know.\nA:";

    fn record() -> QARecord {
        QARecord {
            record_id: "q1".into(),
            question: "What is the capital of Washington?".into(),
            prompt: PROMPT.into(),
            answers: vec!["Olympia".into()],
            entity_id: "e1".into(),
            popularity: 10.0,
            bucket: Bucket::Head,
        }
    }

    fn dist(cands: &[(&str, f64)]) -> AnswerDistribution {
        AnswerDistribution::new(
            "q1",
            0,
            cands.iter().map(|(t, l)| (t.to_string(), *l)).collect(),
            "",
        )
        .unwrap()
    }

    fn backend(greedy: &str, cands: &[(&str, f64)], conts: &[(&str, &str)]) -> MockBackend {
        MockBackend::new(GapModelSpec {
            max_top_logprobs: 10,
            default: MockScript {
                greedy_completion: "unsure".into(),
                candidates: vec![MockCandidate::new("unsure", -0.1)],
                continuations: BTreeMap::new(),
            },
            scripts: vec![PromptScript {
                prompt: PROMPT.into(),
                script: MockScript {
                    greedy_completion: greedy.into(),
                    candidates: cands.iter().map(|(t, l)| MockCandidate::new(*t, *l)).collect(),
                    continuations: conts
                        .iter()
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .collect(),
                },
            }],
        })
        .unwrap()
    }

    fn settings() -> DecodeSettings {
        DecodeSettings {
            top_k: 5,
            ..DecodeSettings::default()
        }
    }

    #[test]
    fn selects_after_unsure() {
        let c = MetricConfig::default();
        let s = select_recovery_token(
            &dist(&[("unsure", -0.1), (" Olympia", -1.2), (" Seattle", -2.0)]),
            &c,
        )
        .unwrap();
        assert_eq!(s.selected.unwrap().token_text, " Olympia");
        assert_eq!(s.skipped.len(), 1);
        assert_eq!(s.skipped[0].verdict.reason, FilterReason::UnsPrefix);
    }

    #[test]
    fn head_already_informative() {
        let c = MetricConfig::default();
        let s = select_recovery_token(&dist(&[(" Paris", -0.3), (" Lyon", -1.0)]), &c).unwrap();
        assert_eq!(s.selected.unwrap().token_text, " Paris");
        assert!(s.skipped.is_empty());
    }

    #[test]
    fn all_uninformative() {
        let c = MetricConfig::default();
        let d = dist(&[("uns", -0.1), ("", -0.5), ("of", -0.9)]);
        for cand in d.candidates() {
            assert!(is_uninformative_token(&cand.token_text, &c).uninformative);
        }
        let s = select_recovery_token(&d, &c).unwrap();
        assert!(s.selected.is_none());
        assert_eq!(s.skipped.len(), 3);
    }

    #[test]
    fn empty_candidates_rejected() {
        let err = select_recovery_token(&dist(&[]), &MetricConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoCandidates { .. }));
    }

    #[test]
    fn recovers_hidden_answer() {
        let b = backend(
            "unsure",
            &[("unsure", -0.1), (" Olymp", -1.2), (" Seattle", -2.0)],
            &[(" Olymp", "ia")],
        );
        let (outcome, trace) =
            recall_decode(&record(), &b, &MetricConfig::default(), &settings()).unwrap();
        assert_eq!(outcome.final_answer, " Olympia");
        assert_eq!(outcome.response_class, ResponseClass::Correct);
        assert_eq!(outcome.hit_rank, Some(2));
        assert_eq!(trace.new_prompt, format!("{PROMPT} Olymp"));
        assert_eq!(trace.new_completion.as_deref(), Some("ia"));
        assert!(!trace.fallback_used);
    }

    #[test]
    fn informative_answer_untouched() {
        let b = backend("Olympia", &[(" Olympia", -0.1)], &[]);
        let d = decode_record(&record(), &b, &MetricConfig::default(), &settings()).unwrap();
        assert_eq!(d.backend_calls, 1);
        assert_eq!(d.recovered, d.baseline);
        assert!(d.trace.selected.is_none());
        assert_eq!(d.trace.new_prompt, PROMPT);
    }

    #[test]
    fn fallback_when_nothing_informative() {
        let b = backend("unsure", &[("unsure", -0.1), ("of", -0.5)], &[]);
        let d = decode_record(&record(), &b, &MetricConfig::default(), &settings()).unwrap();
        assert!(d.trace.fallback_used);
        assert_eq!(d.recovered.final_answer, "unsure");
        assert_eq!(d.recovered.response_class, ResponseClass::Uninformative);
        assert_eq!(d.backend_calls, 1);
    }

    #[test]
    fn always_recover_reprompts_informative_answers() {
        let b = backend("Seattle", &[(" Seattle", -0.1)], &[(" Seattle", " is the largest city")]);
        let s = DecodeSettings {
            always_recover: true,
            ..settings()
        };
        let d = decode_record(&record(), &b, &MetricConfig::default(), &s).unwrap();
        assert_eq!(d.backend_calls, 2);
        assert_eq!(d.recovered.final_answer, " Seattle is the largest city");
    }

    #[test]
    fn unpartitioned_batch_rejected() {
        let mut r = record();
        r.bucket = Bucket::Unassigned;
        let b = backend("Olympia", &[(" Olympia", -0.1)], &[]);
        let err = batch_recall(&[r], &b, &MetricConfig::default(), &settings(), 1).unwrap_err();
        assert!(matches!(err, Error::Unpartitioned { .. }));
    }
}
