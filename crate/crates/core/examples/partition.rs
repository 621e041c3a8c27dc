//! Head/torso/tail buckets by entity popularity, from JSONL and CSV inputs.
//!
//!     cargo run --example partition

use latent_recall::dataset::{entity_bucket_counts, load_dataset, partition_by_popularity, DatasetFormat};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");

fn main() -> latent_recall::Result<()> {
    for (file, format) in [("capitals.jsonl", DatasetFormat::Jsonl), ("capitals.csv", DatasetFormat::Csv)] {
        let records = load_dataset(format!("{DATA}/{file}").as_ref(), format, "||")?;
        let parted = partition_by_popularity(&records, 0.10, 0.40)?;
        println!("{file}: {:?}", entity_bucket_counts(&parted));
        for r in &parted {
            println!("  {:<12} {:>6} {}", r.entity_id, r.popularity, r.bucket);
        }
    }
    Ok(())
}
