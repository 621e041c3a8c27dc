//! Bounded-parallel evaluation over a backend.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::backend::{CompletionRequest, LMBackend};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate_record, MetricsReport};
use crate::types::{AnswerDistribution, Bucket, EvalOutcome, MetricConfig, QARecord};

/// Decoding parameters shared by every backend query of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeSettings {
    /// Candidates requested per query.
    pub top_k: usize,
    pub max_tokens: usize,
    pub probe_position: usize,
    /// Recover even when the greedy answer is informative.
    pub always_recover: bool,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            top_k: 100,
            max_tokens: 32,
            probe_position: 0,
            always_recover: false,
        }
    }
}

impl DecodeSettings {
    pub fn request<'a>(&self, record_id: &'a str, prompt: &'a str) -> CompletionRequest<'a> {
        CompletionRequest {
            record_id,
            prompt,
            top_k: self.top_k,
            max_tokens: self.max_tokens,
            probe_position: self.probe_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub record_id: String,
    pub error: String,
}

impl RecordFailure {
    pub fn new(record_id: &str, error: Error) -> Self {
        let error = match error {
            Error::Record { source, .. } => *source,
            other => other,
        };
        Self {
            record_id: record_id.to_string(),
            error: error.to_string(),
        }
    }
}

/// Maps `f` over `items` on up to `concurrency` threads. Results keep input order.
pub fn run_parallel<T, R, F>(items: &[T], concurrency: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = concurrency.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let result = f(item);
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}

pub(crate) fn ensure_partitioned(records: &[QARecord]) -> Result<()> {
    match records.iter().find(|r| r.bucket == Bucket::Unassigned) {
        Some(r) => Err(Error::Unpartitioned {
            record_id: r.record_id.clone(),
        }),
        None => Ok(()),
    }
}

/// Queries the backend once for `record` and validates the answer.
pub fn query_record(
    record: &QARecord,
    backend: &dyn LMBackend,
    settings: &DecodeSettings,
) -> Result<AnswerDistribution> {
    let dist = backend
        .complete(&settings.request(&record.record_id, &record.prompt))
        .map_err(|e| e.for_record(&record.record_id))?;
    if dist.k_available() == 0 {
        return Err(Error::NoCandidates {
            record_id: record.record_id.clone(),
        });
    }
    Ok(dist.with_record_id(record.record_id.clone()))
}

#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    /// Sorted by record id.
    pub distributions: Vec<AnswerDistribution>,
    pub outcomes: Vec<EvalOutcome>,
    pub report: Option<MetricsReport>,
    pub failures: Vec<RecordFailure>,
}

/// Greedy-only evaluation of every record: Hits@k, accuracy, response types.
pub fn batch_evaluate(
    records: &[QARecord],
    backend: &dyn LMBackend,
    config: &MetricConfig,
    settings: &DecodeSettings,
    concurrency: usize,
) -> Result<BatchEvaluation> {
    config.validate()?;
    ensure_partitioned(records)?;
    let results = run_parallel(records, concurrency, |record| {
        let dist = query_record(record, backend, settings)?;
        let outcome = evaluate_record(record, &dist, config)?;
        Ok::<_, Error>((dist, outcome))
    });

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(pair) => ok.push((record, pair)),
            Err(e) => failures.push(RecordFailure::new(&record.record_id, e)),
        }
    }
    ok.sort_by(|a, b| a.0.record_id.cmp(&b.0.record_id));
    failures.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let kept: Vec<QARecord> = ok.iter().map(|(r, _)| (*r).clone()).collect();
    let (distributions, outcomes): (Vec<_>, Vec<_>) = ok.into_iter().map(|(_, p)| p).unzip();
    let report = if kept.is_empty() {
        None
    } else {
        Some(aggregate(&kept, &distributions, &outcomes, config)?)
    };
    Ok(BatchEvaluation {
        distributions,
        outcomes,
        report,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..100).collect();
        for n in [1, 3, 8, 200] {
            let out = run_parallel(&items, n, |x| x * 2);
            assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
        assert!(run_parallel(&Vec::<u8>::new(), 4, |x| *x).is_empty());
    }
}
