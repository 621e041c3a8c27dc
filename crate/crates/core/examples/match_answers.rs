//! Token-level matching and answer correctness against alias lists.
//!
//!     cargo run --example match_answers

use latent_recall::{answer_correct, longest_common_substring_len, token_matches};

fn main() -> latent_recall::Result<()> {
    let answers = vec!["Olympia".to_string()];

    for token in [" Olymp", "Oly", " Seattle", "ol", "OLYMPIA"] {
        let m = token_matches(token, &answers, 3)?;
        println!(
            "{token:>10?}  matched={:<5} shared_len={} alias={:?}",
            m.matched, m.shared_len, m.matched_alias
        );
    }

    // Short aliases need an exact match.
    let short = vec!["Io".to_string()];
    println!("{:?}", token_matches(" io", &short, 3)?.matched);
    println!("{:?}", token_matches("Ion", &short, 3)?.matched);

    println!("lcs(banana, ananas) = {}", longest_common_substring_len("banana", "ananas"));

    let aliases = vec!["South Tarawa".to_string(), "Tarawa".to_string()];
    for answer in ["It is Tarawa.", "tarawa", "Bairiki", "unsure"] {
        println!("{answer:>14?} correct={}", answer_correct(answer, &aliases, 3));
    }
    Ok(())
}
