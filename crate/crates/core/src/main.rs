use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use latent_recall::backend::server::MockServer;
use latent_recall::backend::{GapModelSpec, LogBase, MockBackend};
use latent_recall::commands::{
    cmd_dump_convert, cmd_evaluate, cmd_partition, cmd_recall, BackendKind, BackendOptions,
    DatasetOptions, DumpSource, RunOptions,
};
use latent_recall::dataset::{DatasetFormat, DEFAULT_ALIAS_DELIMITER};
use latent_recall::harness::{DecodeSettings, RecordFailure};
use latent_recall::types::parse_stopwords;
use latent_recall::{Error, MetricConfig, Result};

#[derive(Parser)]
#[command(name = "latent-recall", version, about = "Hits@k knowledge-retention metrics and answer recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign head/torso/tail buckets by entity popularity.
    Partition {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        metrics: MetricArgs,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Hits@k, accuracy and response types from greedy decoding.
    Evaluate {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        metrics: MetricArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Also write the collected distributions as a logit dump.
        #[arg(long)]
        export_dump: bool,
    },
    /// Baseline vs. recovered accuracy with the filter-and-reprompt decoder.
    Recall {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        metrics: MetricArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Per-record recovery traces (JSONL).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Recover even when the greedy answer is informative.
        #[arg(long)]
        always_recover: bool,
    },
    /// Serve a scripted mock model over the completions endpoint.
    MockServe {
        #[arg(long)]
        mock_spec: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// 0 picks a free port.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Canonicalize a logit dump or convert captured completion responses.
    DumpConvert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `dump` or `openai`.
        #[arg(long, default_value = "dump")]
        source: DumpSource,
        #[arg(long)]
        fix_order: bool,
        #[arg(long, default_value = "e")]
        log_base: LogBase,
        #[arg(long, default_value_t = 0)]
        probe_position: usize,
    },
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// `jsonl` or `csv`; guessed from the extension by default.
    #[arg(long)]
    format: Option<DatasetFormat>,
    #[arg(long, default_value = DEFAULT_ALIAS_DELIMITER)]
    alias_delim: String,
}

impl DatasetArgs {
    fn options(&self) -> DatasetOptions {
        DatasetOptions {
            path: self.dataset.clone(),
            format: self.format,
            alias_delimiter: self.alias_delim.clone(),
        }
    }
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,5,50,100")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0.10)]
    head_frac: f64,
    #[arg(long, default_value_t = 0.40)]
    torso_frac: f64,
    #[arg(long, default_value_t = 3)]
    min_match_len: usize,
    /// One stopword per line; replaces the built-in list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

impl MetricArgs {
    fn config(&self) -> Result<MetricConfig> {
        let mut k = self.k.clone();
        k.sort_unstable();
        k.dedup();
        let mut config = MetricConfig::default().with_k_values(k);
        config.head_fraction = self.head_frac;
        config.torso_fraction = self.torso_frac;
        config.min_match_len = self.min_match_len;
        if let Some(path) = &self.stopwords {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
            config.stopword_list = parse_stopwords(&text);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct BackendArgs {
    /// `http`, `dump` or `mock`.
    #[arg(long, default_value = "http")]
    backend: BackendKind,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Largest top-logprobs the endpoint serves.
    #[arg(long, default_value_t = 20)]
    max_top_logprobs: usize,
    /// Base of logprobs reported by the backend: `e`, `10` or `2`.
    #[arg(long, default_value = "e")]
    log_base: LogBase,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Re-sort candidate lists that are out of order instead of rejecting them.
    #[arg(long)]
    fix_order: bool,
    #[arg(long)]
    mock_spec: Option<PathBuf>,
}

impl BackendArgs {
    fn options(&self) -> BackendOptions {
        let mut opts = BackendOptions::new(self.backend);
        opts.endpoint = self.endpoint.clone();
        opts.model = self.model.clone();
        opts.max_top_logprobs = self.max_top_logprobs;
        opts.log_base = self.log_base;
        opts.max_attempts = self.retries.max(1);
        opts.timeout = Duration::from_secs(self.timeout_secs);
        opts.dump = self.dump.clone();
        opts.fix_order = self.fix_order;
        opts.mock_spec = self.mock_spec.clone();
        opts
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 32)]
    max_tokens: usize,
    #[arg(long, default_value_t = 0)]
    probe_position: usize,
}

impl RunArgs {
    fn options(&self, config: MetricConfig, always_recover: bool) -> RunOptions {
        RunOptions {
            config,
            settings: DecodeSettings {
                max_tokens: self.max_tokens,
                probe_position: self.probe_position,
                always_recover,
                ..DecodeSettings::default()
            },
            concurrency: self.concurrency.max(1),
            out_dir: self.out.clone(),
        }
    }
}

fn report_failures(failures: &[RecordFailure]) -> ExitCode {
    if failures.is_empty() {
        return ExitCode::SUCCESS;
    }
    for f in failures {
        eprintln!("record {}: {}", f.record_id, f.error);
    }
    eprintln!("{} record(s) failed", failures.len());
    ExitCode::from(1)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Partition { dataset, metrics, out } => {
            let config = metrics.config()?;
            let summary = cmd_partition(
                &dataset.options(),
                config.head_fraction,
                config.torso_fraction,
                &out,
            )?;
            println!("{} records -> {}", summary.records, out.display());
            for (bucket, n) in &summary.entity_counts {
                println!("{bucket}: {n} entities");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { dataset, backend, metrics, run, export_dump } => {
            let dataset = dataset.options();
            let records = dataset.load()?;
            let backend = backend.options().build(&records)?;
            let opts = run.options(metrics.config()?, false);
            let summary = cmd_evaluate(&dataset, backend.as_ref(), &opts, export_dump)?;
            if let Some(doc) = &summary.document {
                print!("{}", latent_recall::report::hits_table(&doc.report));
            }
            print_files(&summary.files);
            Ok(report_failures(&summary.failures))
        }
        Command::Recall { dataset, backend, metrics, run, trace, always_recover } => {
            let dataset = dataset.options();
            let records = dataset.load()?;
            let backend = backend.options().build(&records)?;
            let opts = run.options(metrics.config()?, always_recover);
            let summary = cmd_recall(&dataset, backend.as_ref(), &opts, trace.as_deref())?;
            print!("{}", latent_recall::report::accuracy_table(&summary.rows));
            print_files(&summary.files);
            Ok(report_failures(&summary.document.failures))
        }
        Command::MockServe { mock_spec, host, port, threads } => {
            let backend = MockBackend::new(GapModelSpec::load(&mock_spec)?)?;
            let server = MockServer::start(backend, &format!("{host}:{port}"), threads)?;
            println!("{}", server.url());
            let stop = server.stop_handle();
            ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed))
                .map_err(|e| Error::Server(e.to_string()))?;
            server.wait();
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpConvert { input, out, source, fix_order, log_base, probe_position } => {
            let (n, resorted) =
                cmd_dump_convert(&input, source, &out, fix_order, log_base, probe_position)?;
            for id in &resorted {
                eprintln!("re-sorted candidates for {id}");
            }
            println!("{n} records -> {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
