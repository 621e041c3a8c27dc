//! Implementations behind the `latent-recall` subcommands.
//!
//! Each command writes its outputs into a directory and returns a summary;
//! the binary only parses flags and maps errors to exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;

use crate::backend::wire::parse_completion_response;
use crate::backend::{
    read_logit_dump, write_logit_dump, DumpBackend, DumpReadout, EndpointConfig, GapModelSpec,
    HttpBackend, LMBackend, LogBase, MockBackend,
};
use crate::dataset::{
    entity_bucket_counts, load_dataset, partition_by_popularity, write_dataset_jsonl,
    DatasetFormat,
};
use crate::error::{Error, Result};
use crate::harness::{batch_evaluate, DecodeSettings, RecordFailure};
use crate::recall::{batch_recall, BatchStats, RecallTrace};
use crate::report::{
    accuracy_csv, accuracy_rows, accuracy_table, hits_table, metrics_csv, rank_cdf_csv,
    AccuracyRow, EvaluationDocument, RecallDocument, RunManifest,
};
use crate::types::{AnswerDistribution, Bucket, MetricConfig, QARecord};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub path: PathBuf,
    /// Guessed from the extension when absent.
    pub format: Option<DatasetFormat>,
    pub alias_delimiter: String,
}

impl DatasetOptions {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            format: None,
            alias_delimiter: crate::dataset::DEFAULT_ALIAS_DELIMITER.to_string(),
        }
    }

    pub fn load(&self) -> Result<Vec<QARecord>> {
        let format = self
            .format
            .unwrap_or_else(|| DatasetFormat::from_path(&self.path));
        load_dataset(&self.path, format, &self.alias_delimiter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSummary {
    pub records: usize,
    pub entity_counts: BTreeMap<Bucket, usize>,
}

/// Loads a dataset, assigns buckets and writes it back as JSONL.
pub fn cmd_partition(
    dataset: &DatasetOptions,
    head_fraction: f64,
    torso_fraction: f64,
    out: &Path,
) -> Result<PartitionSummary> {
    let records = dataset.load()?;
    let parted = partition_by_popularity(&records, head_fraction, torso_fraction)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_dataset_jsonl(out, &parted)?;
    Ok(PartitionSummary {
        records: parted.len(),
        entity_counts: entity_bucket_counts(&parted),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Http,
    Dump,
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "http" => Ok(BackendKind::Http),
            "dump" => Ok(BackendKind::Dump),
            "mock" => Ok(BackendKind::Mock),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackendOptions {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub max_top_logprobs: usize,
    pub log_base: LogBase,
    pub max_attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub dump: Option<PathBuf>,
    pub fix_order: bool,
    pub mock_spec: Option<PathBuf>,
}

impl BackendOptions {
    pub fn new(kind: BackendKind) -> Self {
        Self {
            kind,
            endpoint: None,
            model: None,
            max_top_logprobs: 20,
            log_base: LogBase::Natural,
            max_attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
            dump: None,
            fix_order: false,
            mock_spec: None,
        }
    }

    /// Builds the backend. Dump backends learn record prompts so they can
    /// answer re-prompts from recorded continuations.
    pub fn build(&self, records: &[QARecord]) -> Result<Box<dyn LMBackend>> {
        match self.kind {
            BackendKind::Http => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::Config("--endpoint is required for the http backend".into()))?;
                let mut cfg = EndpointConfig::new(endpoint).with_env_api_key();
                cfg.model = self.model.clone();
                cfg.max_top_logprobs = self.max_top_logprobs;
                cfg.log_base = self.log_base;
                cfg.max_attempts = self.max_attempts;
                cfg.backoff_base = self.backoff;
                cfg.timeout = self.timeout;
                Ok(Box::new(HttpBackend::new(cfg)))
            }
            BackendKind::Dump => {
                let path = self
                    .dump
                    .as_ref()
                    .ok_or_else(|| Error::Config("--dump is required for the dump backend".into()))?;
                let readout = read_logit_dump(path, self.fix_order, self.log_base)?;
                Ok(Box::new(DumpBackend::new(readout).with_prompts(
                    records.iter().map(|r| (r.record_id.as_str(), r.prompt.as_str())),
                )))
            }
            BackendKind::Mock => {
                let path = self.mock_spec.as_ref().ok_or_else(|| {
                    Error::Config("--mock-spec is required for the mock backend".into())
                })?;
                Ok(Box::new(MockBackend::new(GapModelSpec::load(path)?)?))
            }
        }
    }
}

fn check_capability(backend: &dyn LMBackend, k: usize) -> Result<()> {
    let max = backend.capability().max_top_logprobs;
    if k > max {
        return Err(Error::Capability { requested: k, max });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: MetricConfig,
    pub settings: DecodeSettings,
    pub concurrency: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub document: Option<EvaluationDocument>,
    pub failures: Vec<RecordFailure>,
    pub files: Vec<PathBuf>,
}

/// Queries every record once and writes the Hits@k / accuracy report.
///
/// Files: `report.json`, `report.csv`, `rank_cdf.csv`, `hits_table.txt`,
/// `manifest.json`, and `distributions.jsonl` when `export_dump` is set.
pub fn cmd_evaluate(
    dataset: &DatasetOptions,
    backend: &dyn LMBackend,
    run: &RunOptions,
    export_dump: bool,
) -> Result<EvaluateSummary> {
    run.config.validate()?;
    let records = dataset.load()?;
    crate::harness::ensure_partitioned(&records)?;
    let mut settings = run.settings.clone();
    settings.top_k = run.config.max_k();
    check_capability(backend, settings.top_k)?;

    let eval = batch_evaluate(&records, backend, &run.config, &settings, run.concurrency)?;
    ensure_dir(&run.out_dir)?;
    let manifest = RunManifest::new(
        "evaluate",
        backend.describe(),
        &dataset.path,
        &run.config,
        &settings,
    )?;
    let mut files = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let path = run.out_dir.join(name);
        write_file(&path, &text)?;
        files.push(path);
        Ok(())
    };
    let document = match eval.report {
        Some(report) => {
            let doc = EvaluationDocument {
                manifest: manifest.clone(),
                report,
                failures: eval.failures.clone(),
            };
            emit("report.json", serde_json::to_string_pretty(&doc)? + "\n")?;
            emit("report.csv", metrics_csv(&doc.report))?;
            emit("rank_cdf.csv", rank_cdf_csv(&doc.report))?;
            emit("hits_table.txt", hits_table(&doc.report))?;
            Some(doc)
        }
        None => None,
    };
    emit(
        "manifest.json",
        serde_json::to_string_pretty(&manifest.stamped())? + "\n",
    )?;
    if export_dump {
        let path = run.out_dir.join("distributions.jsonl");
        write_logit_dump(&path, &eval.distributions, &BTreeMap::new())?;
        files.push(path);
    }
    Ok(EvaluateSummary {
        document,
        failures: eval.failures,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct RecallSummary {
    pub document: RecallDocument,
    pub rows: Vec<AccuracyRow>,
    pub stats: BatchStats,
    pub files: Vec<PathBuf>,
}

/// Runs baseline and recovered decoding and writes the paired accuracy table.
///
/// Files: `recall_report.json`, `accuracy.csv`, `accuracy_table.txt`,
/// `manifest.json`, plus the trace JSONL at `trace` when given.
pub fn cmd_recall(
    dataset: &DatasetOptions,
    backend: &dyn LMBackend,
    run: &RunOptions,
    trace: Option<&Path>,
) -> Result<RecallSummary> {
    run.config.validate()?;
    let records = dataset.load()?;
    crate::harness::ensure_partitioned(&records)?;
    let mut settings = run.settings.clone();
    settings.top_k = run.config.max_k();
    check_capability(backend, settings.top_k)?;

    let batch = batch_recall(&records, backend, &run.config, &settings, run.concurrency)?;
    ensure_dir(&run.out_dir)?;
    let mut manifest =
        RunManifest::new("recall", backend.describe(), &dataset.path, &run.config, &settings)?;
    manifest.stats = Some(batch.stats.clone());

    let document = RecallDocument {
        manifest: manifest.clone(),
        before: batch.before.clone(),
        after: batch.after.clone(),
        failures: batch.failures.clone(),
    };
    let rows = match (&batch.before, &batch.after) {
        (Some(b), Some(a)) => accuracy_rows(b, a),
        _ => Vec::new(),
    };

    let mut files = Vec::new();
    for (name, text) in [
        ("recall_report.json", serde_json::to_string_pretty(&document)? + "\n"),
        ("accuracy.csv", accuracy_csv(&rows)),
        ("accuracy_table.txt", accuracy_table(&rows)),
        ("manifest.json", serde_json::to_string_pretty(&manifest.stamped())? + "\n"),
    ] {
        let path = run.out_dir.join(name);
        write_file(&path, &text)?;
        files.push(path);
    }
    if let Some(path) = trace {
        let traces: Vec<&RecallTrace> = batch.results.iter().map(|r| &r.trace).collect();
        write_traces(path, &traces)?;
        files.push(path.to_path_buf());
    }
    Ok(RecallSummary {
        document,
        rows,
        stats: batch.stats,
        files,
    })
}

/// One JSON object per line, in record-id order.
pub fn write_traces(path: &Path, traces: &[&RecallTrace]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let file =
        fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpSource {
    /// A logit dump, possibly unsorted or in another log base.
    Dump,
    /// JSONL of `{"record_id", "response"}` with raw completion responses.
    OpenAi,
}

impl std::str::FromStr for DumpSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dump" => Ok(DumpSource::Dump),
            "openai" => Ok(DumpSource::OpenAi),
            other => Err(Error::Config(format!("unknown dump source {other:?}"))),
        }
    }
}

#[derive(Deserialize)]
struct CapturedResponse {
    record_id: String,
    response: Value,
}

fn read_openai_capture(path: &Path, probe_position: usize, base: LogBase) -> Result<DumpReadout> {
    let file =
        fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = DumpReadout::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let captured: CapturedResponse =
            serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if let Some(&first_line) = seen.get(&captured.record_id) {
            return Err(Error::DuplicateRecord {
                path: path.to_path_buf(),
                record_id: captured.record_id,
                first_line,
                second_line: idx + 1,
            });
        }
        seen.insert(captured.record_id.clone(), idx + 1);
        let dist: AnswerDistribution = parse_completion_response(
            &captured.response,
            &captured.record_id,
            probe_position,
            usize::MAX,
            base,
        )
        .map_err(|e| err(e.to_string()))?;
        out.distributions.insert(captured.record_id, dist);
    }
    Ok(out)
}

/// Rewrites a dump or a capture of raw completion responses as a canonical
/// natural-log logit dump. Returns the number of records written and the ids
/// that were re-sorted.
pub fn cmd_dump_convert(
    input: &Path,
    source: DumpSource,
    out: &Path,
    fix_order: bool,
    log_base: LogBase,
    probe_position: usize,
) -> Result<(usize, Vec<String>)> {
    let readout = match source {
        DumpSource::Dump => read_logit_dump(input, fix_order, log_base)?,
        DumpSource::OpenAi => read_openai_capture(input, probe_position, log_base)?,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_logit_dump(out, readout.distributions.values(), &readout.continuations)?;
    Ok((readout.distributions.len(), readout.resorted))
}
