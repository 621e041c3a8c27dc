//! Serve the mock model over HTTP and evaluate through the HTTP backend.
//!
//!     cargo run --example mock_server

use latent_recall::backend::server::MockServer;
use latent_recall::backend::{EndpointConfig, GapModelSpec, HttpBackend, MockBackend};
use latent_recall::dataset::{load_dataset, partition_by_popularity, DatasetFormat};
use latent_recall::harness::{batch_evaluate, DecodeSettings};
use latent_recall::MetricConfig;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");

fn main() -> latent_recall::Result<()> {
    let spec = GapModelSpec::load(format!("{DATA}/capitals_mock.json").as_ref())?;
    let server = MockServer::start(MockBackend::new(spec.clone())?, "127.0.0.1:0", 2)?;
    println!("serving on {}", server.url());

    let records = load_dataset(
        format!("{DATA}/capitals.jsonl").as_ref(),
        DatasetFormat::Jsonl,
        "||",
    )?;
    let records = partition_by_popularity(&records, 0.1, 0.4)?;
    let config = MetricConfig::default().with_k_values(vec![1, 5]);
    let settings = DecodeSettings {
        top_k: 5,
        ..DecodeSettings::default()
    };

    let http = HttpBackend::new(EndpointConfig::new(server.url()));
    let over_http = batch_evaluate(&records, &http, &config, &settings, 4)?;
    let in_process = batch_evaluate(&records, &MockBackend::new(spec)?, &config, &settings, 1)?;

    print!("{}", latent_recall::report::hits_table(over_http.report.as_ref().unwrap()));
    println!("identical to in-process: {}", over_http.report == in_process.report);
    println!("retries: {}", http.retry_count());
    server.shutdown();
    Ok(())
}
