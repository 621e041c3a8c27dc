//! Report documents and CSV/text emitters.
//!
//! Machine outputs (JSON, CSV) keep full precision and store fractions.
//! Human tables show percentages with one decimal.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{DecodeSettings, RecordFailure};
use crate::metrics::{BucketMetrics, MetricsReport};
use crate::recall::BatchStats;
use crate::types::{MetricConfig, ResponseClass};

/// Reproducibility envelope embedded in every report.
///
/// `timestamp` is only written to the standalone `manifest.json`; embedded
/// copies leave it out so data files stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub backend: String,
    pub dataset_path: String,
    pub dataset_sha256: String,
    pub config: MetricConfig,
    pub settings: DecodeSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<BatchStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        backend: String,
        dataset_path: &Path,
        config: &MetricConfig,
        settings: &DecodeSettings,
    ) -> Result<Self> {
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            backend,
            dataset_path: dataset_path.display().to_string(),
            dataset_sha256: file_sha256(dataset_path)?,
            config: config.clone(),
            settings: settings.clone(),
            stats: None,
            timestamp: None,
        })
    }

    pub fn stamped(&self) -> Self {
        Self {
            timestamp: Some(humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string()),
            ..self.clone()
        }
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDocument {
    pub manifest: RunManifest,
    pub report: MetricsReport,
    pub failures: Vec<RecordFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallDocument {
    pub manifest: RunManifest,
    pub before: Option<MetricsReport>,
    pub after: Option<MetricsReport>,
    pub failures: Vec<RecordFailure>,
}

fn labelled(report: &MetricsReport) -> Vec<(String, &BucketMetrics)> {
    report
        .per_bucket
        .iter()
        .map(|(b, m)| (b.to_string(), m))
        .chain(std::iter::once(("overall".to_string(), &report.overall)))
        .collect()
}

fn pct(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

/// `bucket,metric,value` rows: n_records, hits@k, accuracy, response shares.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from("bucket,metric,value\n");
    for (bucket, m) in labelled(report) {
        let _ = writeln!(out, "{bucket},n_records,{}", m.n_records);
        for (k, v) in &m.hits_at {
            let _ = writeln!(out, "{bucket},hits@{k},{v}");
        }
        let _ = writeln!(out, "{bucket},accuracy,{}", m.accuracy);
        for class in ResponseClass::ALL {
            let v = m.response_dist.get(&class).copied().unwrap_or(0.0);
            let _ = writeln!(out, "{bucket},response_{class},{v}");
        }
    }
    out
}

/// `rank,cumulative_fraction,bucket` series for plotting rank CDFs.
pub fn rank_cdf_csv(report: &MetricsReport) -> String {
    let mut out = String::from("rank,cumulative_fraction,bucket\n");
    for (bucket, m) in labelled(report) {
        for (rank, frac) in &m.rank_cdf {
            let _ = writeln!(out, "{rank},{frac},{bucket}");
        }
    }
    out
}

/// Hits@k per bucket as percentages.
pub fn hits_table(report: &MetricsReport) -> String {
    let ks: Vec<usize> = report.config_echo.k_values.clone();
    let mut out = String::new();
    let _ = write!(out, "{:<10}{:>8}", "bucket", "n");
    for k in &ks {
        let _ = write!(out, "{:>10}", format!("Hits@{k}"));
    }
    let _ = writeln!(out, "{:>10}{:>8}{:>8}{:>8}", "Acc", "Cor", "Wrg", "Unin");
    for (bucket, m) in labelled(report) {
        let _ = write!(out, "{:<10}{:>8}", bucket, m.n_records);
        for k in &ks {
            let _ = write!(out, "{:>10}", pct(m.hits_at.get(k).copied().unwrap_or(0.0)));
        }
        let share = |c| pct(m.response_dist.get(&c).copied().unwrap_or(0.0));
        let _ = writeln!(
            out,
            "{:>10}{:>8}{:>8}{:>8}",
            pct(m.accuracy),
            share(ResponseClass::Correct),
            share(ResponseClass::Wrong),
            share(ResponseClass::Uninformative)
        );
    }
    out
}

/// One row per bucket with accuracy before and after recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub bucket: String,
    pub n_records: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    /// Computed from counts: `(correct_after - correct_before) / n`.
    pub delta: f64,
}

pub fn accuracy_rows(before: &MetricsReport, after: &MetricsReport) -> Vec<AccuracyRow> {
    labelled(before)
        .into_iter()
        .zip(labelled(after))
        .map(|((bucket, b), (_, a))| AccuracyRow {
            bucket,
            n_records: b.n_records,
            accuracy_before: b.accuracy,
            accuracy_after: a.accuracy,
            delta: (a.correct_count as f64 - b.correct_count as f64) / b.n_records as f64,
        })
        .collect()
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut out = String::from("bucket,accuracy_before,accuracy_after,delta\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.bucket, r.accuracy_before, r.accuracy_after, r.delta
        );
    }
    out
}

pub fn accuracy_table(rows: &[AccuracyRow]) -> String {
    let mut out = format!(
        "{:<10}{:>8}{:>10}{:>10}{:>10}\n",
        "bucket", "n", "before", "after", "delta"
    );
    for r in rows {
        let delta = format!("{:+.1}", r.delta * 100.0);
        let _ = writeln!(
            out,
            "{:<10}{:>8}{:>10}{:>10}{:>10}",
            r.bucket,
            r.n_records,
            pct(r.accuracy_before),
            pct(r.accuracy_after),
            delta
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{aggregate, evaluate_record};
    use crate::types::{AnswerDistribution, Bucket, QARecord};

    fn report(greedy: &[(&str, Bucket, &str, &[&str])]) -> MetricsReport {
        let config = MetricConfig::default().with_k_values(vec![1, 2]);
        let mut records = Vec::new();
        let mut dists = Vec::new();
        let mut outs = Vec::new();
        for (id, bucket, answer, tokens) in greedy {
            let r = QARecord {
                record_id: id.to_string(),
                question: "q".into(),
                prompt: "p".into(),
                answers: vec!["Olympia".into()],
                entity_id: id.to_string(),
                popularity: 1.0,
                bucket: *bucket,
            };
            let d = AnswerDistribution::new(
                *id,
                0,
                tokens
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (t.to_string(), -(i as f64)))
                    .collect(),
                *answer,
            )
            .unwrap();
            outs.push(evaluate_record(&r, &d, &config).unwrap());
            records.push(r);
            dists.push(d);
        }
        aggregate(&records, &dists, &outs, &config).unwrap()
    }

    #[test]
    fn csv_rows_and_full_precision() {
        let r = report(&[
            ("a", Bucket::Head, "Olympia", &[" Olympia", " x"]),
            ("b", Bucket::Tail, "unsure", &["unsure", " Olymp"]),
            ("c", Bucket::Tail, "Seattle", &[" Seattle", " x"]),
        ]);
        let csv = metrics_csv(&r);
        assert!(csv.starts_with("bucket,metric,value\nhead,n_records,1\n"));
        assert!(csv.contains("tail,hits@2,0.5\n"));
        assert!(csv.contains(&format!("overall,accuracy,{}\n", 1.0 / 3.0)));
        assert!(csv.contains("overall,response_uninformative,"));

        let cdf = rank_cdf_csv(&r);
        assert!(cdf.contains("2,1,head\n"));
        assert!(cdf.contains("1,0,tail\n"));

        let table = hits_table(&r);
        assert!(table.contains("33.3"));
    }

    #[test]
    fn delta_from_counts() {
        let before = report(&[
            ("a", Bucket::Head, "unsure", &["unsure", " Olymp"]),
            ("b", Bucket::Head, "Olympia", &[" Olympia", " x"]),
        ]);
        let after = report(&[
            ("a", Bucket::Head, "Olympia", &["unsure", " Olymp"]),
            ("b", Bucket::Head, "Olympia", &[" Olympia", " x"]),
        ]);
        let rows = accuracy_rows(&before, &after);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].delta, 0.5);
        let csv = accuracy_csv(&rows);
        assert_eq!(
            csv,
            "bucket,accuracy_before,accuracy_after,delta\nhead,0.5,1,0.5\noverall,0.5,1,0.5\n"
        );
        assert!(accuracy_table(&rows).contains("+50.0"));
    }
}
