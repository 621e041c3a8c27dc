//! Hits@k, accuracy, response-type distribution and rank CDF, per popularity
//! bucket and overall.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{classify_response, ResponseKind};
use crate::matcher::{answer_correct, token_matches};
use crate::types::{AnswerDistribution, Bucket, EvalOutcome, MetricConfig, QARecord, ResponseClass};

/// Smallest rank whose candidate token matches one of the record's answers.
pub fn hit_rank(
    dist: &AnswerDistribution,
    record: &QARecord,
    config: &MetricConfig,
) -> Result<Option<usize>> {
    if dist.record_id() != record.record_id {
        return Err(Error::RecordMismatch {
            record: record.record_id.clone(),
            distribution: dist.record_id().to_string(),
        });
    }
    for candidate in dist.candidates() {
        if token_matches(&candidate.token_text, &record.answers, config.min_match_len)?.matched {
            return Ok(Some(candidate.rank));
        }
    }
    Ok(None)
}

/// Fraction of entries whose hit rank is present and at most `k`.
///
/// Each entry is `(hit_rank, k_available)`. Fails when any entry was scored
/// from fewer than `k` candidates.
pub fn compute_hits_at_k(outcomes: &[(Option<usize>, usize)], k: usize) -> Result<f64> {
    Ok(count_hits_at_k(outcomes, k)? as f64 / outcomes.len() as f64)
}

fn count_hits_at_k(outcomes: &[(Option<usize>, usize)], k: usize) -> Result<usize> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("hit-rank outcomes"));
    }
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if let Some(&(_, available)) = outcomes.iter().find(|(_, available)| *available < k) {
        return Err(Error::InsufficientDepth {
            k,
            available,
            record_id: String::new(),
        });
    }
    Ok(outcomes
        .iter()
        .filter(|(rank, _)| matches!(rank, Some(r) if *r <= k))
        .count())
}

/// `(rank, cumulative fraction)` for each rank in `1..=max_rank`.
pub fn compute_rank_cdf(outcomes: &[Option<usize>], max_rank: usize) -> Result<Vec<(usize, f64)>> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("hit-rank outcomes"));
    }
    if max_rank == 0 {
        return Err(Error::Config("max_rank must be positive".into()));
    }
    let mut histogram = vec![0usize; max_rank + 1];
    for rank in outcomes.iter().flatten() {
        if *rank >= 1 && *rank <= max_rank {
            histogram[*rank] += 1;
        }
    }
    let n = outcomes.len() as f64;
    let mut cumulative = 0;
    Ok((1..=max_rank)
        .map(|r| {
            cumulative += histogram[r];
            (r, cumulative as f64 / n)
        })
        .collect())
}

/// Three-way classification; `correct` wins over `uninformative`.
pub fn classify_outcome(final_answer: &str, record: &QARecord, config: &MetricConfig) -> ResponseClass {
    if answer_correct(final_answer, &record.answers, config.min_match_len) {
        ResponseClass::Correct
    } else if classify_response(final_answer, config) == ResponseKind::Uninformative {
        ResponseClass::Uninformative
    } else {
        ResponseClass::Wrong
    }
}

/// Scores the greedy completion of one distribution.
pub fn evaluate_record(
    record: &QARecord,
    dist: &AnswerDistribution,
    config: &MetricConfig,
) -> Result<EvalOutcome> {
    let rank = hit_rank(dist, record, config)?;
    Ok(EvalOutcome {
        record_id: record.record_id.clone(),
        response_class: classify_outcome(dist.greedy_completion(), record, config),
        hit_rank: rank,
        final_answer: dist.greedy_completion().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub n_records: usize,
    pub hits_at: BTreeMap<usize, f64>,
    /// Numerators of `hits_at`.
    pub hits_count: BTreeMap<usize, usize>,
    pub accuracy: f64,
    pub correct_count: usize,
    pub response_dist: BTreeMap<ResponseClass, f64>,
    pub rank_cdf: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_bucket: BTreeMap<Bucket, BucketMetrics>,
    pub overall: BucketMetrics,
    pub config_echo: MetricConfig,
}

struct Scored<'a> {
    outcome: &'a EvalOutcome,
    k_available: usize,
}

fn bucket_metrics(rows: &[Scored<'_>], config: &MetricConfig) -> Result<BucketMetrics> {
    let pairs: Vec<(Option<usize>, usize)> =
        rows.iter().map(|r| (r.outcome.hit_rank, r.k_available)).collect();
    let n = rows.len();
    let mut hits_at = BTreeMap::new();
    let mut hits_count = BTreeMap::new();
    for &k in &config.k_values {
        let count = count_hits_at_k(&pairs, k)?;
        hits_count.insert(k, count);
        hits_at.insert(k, count as f64 / n as f64);
    }
    let mut class_counts: BTreeMap<ResponseClass, usize> =
        ResponseClass::ALL.iter().map(|c| (*c, 0)).collect();
    for row in rows {
        *class_counts.entry(row.outcome.response_class).or_default() += 1;
    }
    let correct_count = class_counts[&ResponseClass::Correct];
    let response_dist = class_counts
        .iter()
        .map(|(c, count)| (*c, *count as f64 / n as f64))
        .collect();
    let ranks: Vec<Option<usize>> = rows.iter().map(|r| r.outcome.hit_rank).collect();
    Ok(BucketMetrics {
        n_records: n,
        hits_at,
        hits_count,
        accuracy: correct_count as f64 / n as f64,
        correct_count,
        response_dist,
        rank_cdf: compute_rank_cdf(&ranks, config.max_k())?,
    })
}

/// Assembles the per-bucket and overall report.
///
/// The three collections must cover the same record ids. Every record must
/// already carry a popularity bucket. Output does not depend on input order.
pub fn aggregate(
    records: &[QARecord],
    distributions: &[AnswerDistribution],
    outcomes: &[EvalOutcome],
    config: &MetricConfig,
) -> Result<MetricsReport> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("records"));
    }
    let dists: HashMap<&str, &AnswerDistribution> =
        distributions.iter().map(|d| (d.record_id(), d)).collect();
    let outs: HashMap<&str, &EvalOutcome> =
        outcomes.iter().map(|o| (o.record_id.as_str(), o)).collect();
    if dists.len() != distributions.len() || outs.len() != outcomes.len() {
        return Err(Error::KeyMismatch("duplicate record ids".into()));
    }
    if dists.len() != records.len() || outs.len() != records.len() {
        return Err(Error::KeyMismatch(format!(
            "{} records, {} distributions, {} outcomes",
            records.len(),
            dists.len(),
            outs.len()
        )));
    }

    let mut sorted: Vec<&QARecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].record_id == w[1].record_id) {
        return Err(Error::KeyMismatch(format!("duplicate record id {:?}", w[0].record_id)));
    }

    let mut by_bucket: BTreeMap<Bucket, Vec<Scored<'_>>> = BTreeMap::new();
    let mut all = Vec::with_capacity(sorted.len());
    for record in sorted {
        let id = record.record_id.as_str();
        if record.bucket == Bucket::Unassigned {
            return Err(Error::Unpartitioned {
                record_id: record.record_id.clone(),
            });
        }
        let (Some(dist), Some(outcome)) = (dists.get(id), outs.get(id)) else {
            return Err(Error::KeyMismatch(format!("record {id:?} missing from inputs")));
        };
        if dist.k_available() < config.max_k() {
            return Err(Error::InsufficientDepth {
                k: config.max_k(),
                available: dist.k_available(),
                record_id: record.record_id.clone(),
            });
        }
        let scored = || Scored {
            outcome,
            k_available: dist.k_available(),
        };
        by_bucket.entry(record.bucket).or_default().push(scored());
        all.push(scored());
    }

    let per_bucket = by_bucket
        .iter()
        .map(|(b, rows)| Ok((*b, bucket_metrics(rows, config)?)))
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        per_bucket,
        overall: bucket_metrics(&all, config)?,
        config_echo: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, bucket: Bucket) -> QARecord {
        QARecord {
            record_id: id.into(),
            question: "What is the capital of Washington?".into(),
            prompt: "Q: What is the capital of Washington?\nA:".into(),
            answers: vec!["Olympia".into()],
            entity_id: format!("e-{id}"),
            popularity: 1.0,
            bucket,
        }
    }

    fn dist(id: &str, tokens: &[&str], greedy: &str) -> AnswerDistribution {
        let candidates = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.to_string(), -(i as f64) - 0.1))
            .collect();
        AnswerDistribution::new(id, 0, candidates, greedy).unwrap()
    }

    #[test]
    fn hit_rank_examples() {
        let c = MetricConfig::default();
        let r = record("q1", Bucket::Head);
        assert_eq!(
            hit_rank(&dist("q1", &[" Seattle", " Olymp", " Tacoma"], "Seattle"), &r, &c).unwrap(),
            Some(2)
        );
        assert_eq!(
            hit_rank(&dist("q1", &[" Olympia", " Seattle"], "Olympia"), &r, &c).unwrap(),
            Some(1)
        );
        let unrelated = [" Paris", " Berlin", " Rome", " Tokyo", " Cairo"];
        for t in unrelated {
            assert!(!token_matches(t, &r.answers, 3).unwrap().matched);
        }
        assert_eq!(hit_rank(&dist("q1", &unrelated, "Paris"), &r, &c).unwrap(), None);
    }

    #[test]
    fn hit_rank_rejects_mismatched_ids() {
        let c = MetricConfig::default();
        let err = hit_rank(&dist("q2", &["x"], ""), &record("q1", Bucket::Head), &c).unwrap_err();
        assert!(matches!(err, Error::RecordMismatch { .. }));
    }

    #[test]
    fn hits_at_k_examples() {
        let rows = [(Some(1), 10), (Some(3), 10), (None, 10), (Some(7), 10)];
        assert_eq!(compute_hits_at_k(&rows, 5).unwrap(), 0.5);
        assert_eq!(compute_hits_at_k(&[(Some(1), 1); 3], 1).unwrap(), 1.0);
        assert!(matches!(compute_hits_at_k(&[], 1), Err(Error::EmptyInput(_))));
        assert!(matches!(
            compute_hits_at_k(&[(Some(1), 4)], 5),
            Err(Error::InsufficientDepth { .. })
        ));
    }

    #[test]
    fn rank_cdf_examples() {
        let cdf = compute_rank_cdf(&[Some(1), Some(2), Some(2), None], 3).unwrap();
        assert_eq!(cdf, vec![(1, 0.25), (2, 0.75), (3, 0.75)]);
        let cdf = compute_rank_cdf(&[None; 4], 5).unwrap();
        assert!(cdf.iter().all(|(_, f)| *f == 0.0));
        assert_eq!(cdf.len(), 5);
        assert!(compute_rank_cdf(&[], 3).is_err());
    }

    #[test]
    fn aggregate_single_correct_record() {
        let c = MetricConfig::default().with_k_values(vec![1, 2]);
        let r = record("q1", Bucket::Head);
        let d = dist("q1", &[" Olympia", " Seattle"], "Olympia");
        let o = evaluate_record(&r, &d, &c).unwrap();
        let report = aggregate(&[r], &[d], &[o], &c).unwrap();
        assert_eq!(report.overall.accuracy, 1.0);
        assert_eq!(report.overall.hits_at[&1], 1.0);
        assert_eq!(report.per_bucket.len(), 1);
    }

    #[test]
    fn aggregate_all_unsure_fixture() {
        let c = MetricConfig::default().with_k_values(vec![1, 2]);
        let records: Vec<_> = (0..3).map(|i| record(&format!("q{i}"), Bucket::Tail)).collect();
        let dists: Vec<_> = records
            .iter()
            .map(|r| dist(&r.record_id, &["unsure", " Olymp"], "unsure"))
            .collect();
        let outs: Vec<_> = records
            .iter()
            .zip(&dists)
            .map(|(r, d)| evaluate_record(r, d, &c).unwrap())
            .collect();
        let report = aggregate(&records, &dists, &outs, &c).unwrap();
        assert_eq!(report.overall.accuracy, 0.0);
        assert_eq!(report.overall.hits_at[&1], 0.0);
        assert_eq!(report.overall.hits_at[&2], 1.0);
        assert_eq!(report.overall.response_dist[&ResponseClass::Uninformative], 1.0);
    }

    #[test]
    fn aggregate_sums_buckets() {
        let c = MetricConfig::default().with_k_values(vec![1]);
        let records = vec![
            record("a", Bucket::Head),
            record("b", Bucket::Head),
            record("c", Bucket::Tail),
            record("d", Bucket::Tail),
        ];
        let dists: Vec<_> = records
            .iter()
            .map(|r| dist(&r.record_id, &[" Seattle"], "Seattle"))
            .collect();
        let outs: Vec<_> = records
            .iter()
            .zip(&dists)
            .map(|(r, d)| evaluate_record(r, d, &c).unwrap())
            .collect();
        let report = aggregate(&records, &dists, &outs, &c).unwrap();
        assert_eq!(report.overall.n_records, 4);
        assert_eq!(report.per_bucket[&Bucket::Head].n_records, 2);
        assert_eq!(report.per_bucket[&Bucket::Tail].n_records, 2);
        assert!(!report.per_bucket.contains_key(&Bucket::Torso));
    }

    #[test]
    fn aggregate_errors() {
        let c = MetricConfig::default().with_k_values(vec![1, 3]);
        let r = record("q1", Bucket::Head);
        let d = dist("q1", &[" Olympia", " x"], "Olympia");
        let o = evaluate_record(&r, &d, &c).unwrap();
        assert!(matches!(
            aggregate(&[r.clone()], &[d.clone()], &[o.clone()], &c),
            Err(Error::InsufficientDepth { .. })
        ));
        let c = c.with_k_values(vec![1]);
        let mut unassigned = r.clone();
        unassigned.bucket = Bucket::Unassigned;
        assert!(matches!(
            aggregate(&[unassigned], &[d.clone()], &[o.clone()], &c),
            Err(Error::Unpartitioned { .. })
        ));
        assert!(matches!(
            aggregate(&[r], &[d], &[], &c),
            Err(Error::KeyMismatch(_))
        ));
    }

    #[test]
    fn correct_beats_uninformative() {
        let c = MetricConfig::default();
        let r = record("q", Bucket::Head);
        assert_eq!(classify_outcome("Olympia", &r, &c), ResponseClass::Correct);
        assert_eq!(
            classify_outcome("olympia olympia olympia olympia", &r, &c),
            ResponseClass::Correct
        );
        assert_eq!(classify_outcome("unsure", &r, &c), ResponseClass::Uninformative);
        assert_eq!(classify_outcome("Seattle", &r, &c), ResponseClass::Wrong);
    }

    #[test]
    fn hits_at_one_bounds_single_token_accuracy() {
        // the full answer is the first token, so accuracy <= Hits@1
        let c = MetricConfig::default().with_k_values(vec![1]);
        let cases = [("a", " Olympia"), ("b", " Seattle"), ("c", " Olympia")];
        let records: Vec<_> = cases.iter().map(|(id, _)| record(id, Bucket::Head)).collect();
        let dists: Vec<_> = cases
            .iter()
            .map(|(id, tok)| dist(id, &[tok], tok))
            .collect();
        let outs: Vec<_> = records
            .iter()
            .zip(&dists)
            .map(|(r, d)| evaluate_record(r, d, &c).unwrap())
            .collect();
        let report = aggregate(&records, &dists, &outs, &c).unwrap();
        assert!(report.overall.hits_at[&1] >= report.overall.accuracy);
    }

    proptest! {
        #[test]
        fn hits_monotone_in_k(ranks in prop::collection::vec(prop::option::of(1usize..=20), 1..50), k1 in 1usize..=20, k2 in 1usize..=20) {
            let rows: Vec<_> = ranks.iter().map(|r| (*r, 20)).collect();
            let (lo, hi) = (k1.min(k2), k1.max(k2));
            prop_assert!(compute_hits_at_k(&rows, lo).unwrap() <= compute_hits_at_k(&rows, hi).unwrap());
        }

        #[test]
        fn aggregate_permutation_invariant(n in 1usize..12, rot in 0usize..12) {
            let c = MetricConfig::default().with_k_values(vec![1, 2]);
            let buckets = [Bucket::Head, Bucket::Torso, Bucket::Tail];
            let records: Vec<_> = (0..n).map(|i| record(&format!("q{i:02}"), buckets[i % 3])).collect();
            let dists: Vec<_> = records.iter().enumerate().map(|(i, r)| {
                if i % 2 == 0 { dist(&r.record_id, &["unsure", " Olymp"], "unsure") }
                else { dist(&r.record_id, &[" Olympia", " x"], "Olympia") }
            }).collect();
            let outs: Vec<_> = records.iter().zip(&dists).map(|(r, d)| evaluate_record(r, d, &c).unwrap()).collect();
            let base = serde_json::to_string(&aggregate(&records, &dists, &outs, &c).unwrap()).unwrap();
            let mut r2 = records.clone();
            r2.rotate_left(rot % n);
            let mut d2 = dists.clone();
            d2.reverse();
            let mut o2 = outs.clone();
            o2.rotate_right(rot % n);
            let permuted = serde_json::to_string(&aggregate(&r2, &d2, &o2, &c).unwrap()).unwrap();
            prop_assert_eq!(base, permuted);
        }
    }
}
