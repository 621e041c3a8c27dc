//! Filter-and-reprompt recovery against the in-process mock model.
//!
//!     cargo run --example recall_mock

use latent_recall::backend::{GapModelSpec, MockBackend};
use latent_recall::dataset::{load_dataset, partition_by_popularity, DatasetFormat};
use latent_recall::harness::DecodeSettings;
use latent_recall::report::{accuracy_rows, accuracy_table};
use latent_recall::{batch_recall, MetricConfig};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");

fn main() -> latent_recall::Result<()> {
    let records = load_dataset(
        format!("{DATA}/capitals.jsonl").as_ref(),
        DatasetFormat::Jsonl,
        "||",
    )?;
    let records = partition_by_popularity(&records, 0.1, 0.4)?;
    let backend = MockBackend::new(GapModelSpec::load(
        format!("{DATA}/capitals_mock.json").as_ref(),
    )?)?;
    let config = MetricConfig::default().with_k_values(vec![1, 5]);
    let settings = DecodeSettings {
        top_k: 5,
        ..DecodeSettings::default()
    };

    let batch = batch_recall(&records, &backend, &config, &settings, 2)?;
    for r in &batch.results {
        let t = &r.trace;
        println!(
            "{:<4} {:<14?} -> {:<14?} skipped={} selected={:?} fallback={}",
            t.record_id,
            r.baseline.final_answer,
            r.recovered.final_answer,
            t.skipped.len(),
            t.selected.as_ref().map(|c| c.token_text.as_str()),
            t.fallback_used,
        );
    }
    println!("{:?}", batch.stats);
    if let (Some(before), Some(after)) = (&batch.before, &batch.after) {
        print!("{}", accuracy_table(&accuracy_rows(before, after)));
    }
    Ok(())
}
