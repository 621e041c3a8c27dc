//! Offline evaluation from a logit dump, including a log-base conversion.
//!
//!     cargo run --example logit_dump

use std::collections::BTreeMap;

use latent_recall::backend::{read_logit_dump, write_logit_dump, DumpBackend, LogBase};
use latent_recall::dataset::{load_dataset, partition_by_popularity, DatasetFormat};
use latent_recall::harness::DecodeSettings;
use latent_recall::{batch_recall, AnswerDistribution, MetricConfig};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");

fn main() -> latent_recall::Result<()> {
    let records = load_dataset(
        format!("{DATA}/capitals.jsonl").as_ref(),
        DatasetFormat::Jsonl,
        "||",
    )?;
    let records = partition_by_popularity(&records, 0.1, 0.4)?;

    let readout = read_logit_dump(
        format!("{DATA}/capitals_dump.jsonl").as_ref(),
        false,
        LogBase::Natural,
    )?;
    println!("{} distributions", readout.distributions.len());

    let backend = DumpBackend::new(readout)
        .with_prompts(records.iter().map(|r| (r.record_id.as_str(), r.prompt.as_str())));
    let config = MetricConfig::default().with_k_values(vec![1, 5]);
    let settings = DecodeSettings {
        top_k: 5,
        ..DecodeSettings::default()
    };
    let batch = batch_recall(&records, &backend, &config, &settings, 1)?;
    let (before, after) = (batch.before.unwrap(), batch.after.unwrap());
    println!(
        "accuracy {:.2} -> {:.2}",
        before.overall.accuracy, after.overall.accuracy
    );

    // A base-10 dump read back as natural logs.
    let dist = AnswerDistribution::new(
        "x",
        0,
        vec![(" Paris".into(), -0.5), (" Lyon".into(), -1.0)],
        "Paris",
    )?;
    let dir = std::env::temp_dir().join("latent-recall-dump-example");
    std::fs::create_dir_all(&dir).ok();
    let path = dir.join("base10.jsonl");
    write_logit_dump(&path, [&dist], &BTreeMap::new())?;
    let back = read_logit_dump(&path, false, LogBase::Ten)?;
    for c in back.distributions["x"].candidates() {
        println!("{:>8?} {:.4}", c.token_text, c.logprob);
    }
    Ok(())
}
