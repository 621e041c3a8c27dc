//! Hits@k and the rank CDF over the sample data, using the scripted mock model.
//!
//!     cargo run --example hits_at_k

use latent_recall::backend::{GapModelSpec, MockBackend};
use latent_recall::dataset::{load_dataset, partition_by_popularity, DatasetFormat};
use latent_recall::harness::{batch_evaluate, DecodeSettings};
use latent_recall::{compute_hits_at_k, compute_rank_cdf, hit_rank, MetricConfig};

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
    let config = MetricConfig::default().with_k_values(vec![1, 2, 3, 5]);
    let settings = DecodeSettings {
        top_k: 5,
        ..DecodeSettings::default()
    };

    let eval = batch_evaluate(&records, &backend, &config, &settings, 4)?;

    // The same numbers by hand from per-record hit ranks.
    let mut ranks = Vec::new();
    for dist in &eval.distributions {
        let record = records
            .iter()
            .find(|r| r.record_id == dist.record_id())
            .expect("record for distribution");
        let rank = hit_rank(dist, record, &config)?;
        println!("{:<4} hit rank {:?}", record.record_id, rank);
        ranks.push((rank, dist.k_available()));
    }
    for k in &config.k_values {
        println!("Hits@{k} = {:.2}", compute_hits_at_k(&ranks, *k)?);
    }
    let only_ranks: Vec<_> = ranks.iter().map(|(r, _)| *r).collect();
    for (rank, frac) in compute_rank_cdf(&only_ranks, 5)? {
        println!("P(rank <= {rank}) = {frac:.2}");
    }

    let report = eval.report.expect("at least one record");
    print!("{}", latent_recall::report::hits_table(&report));
    Ok(())
}
