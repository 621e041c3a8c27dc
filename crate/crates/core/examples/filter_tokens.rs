//! Uninformative-token filter and three-way response classification.
//!
//!     cargo run --example filter_tokens

use latent_recall::filter::classify_response;
use latent_recall::{is_uninformative_token, MetricConfig};

fn main() {
    let config = MetricConfig::default();

    for token in [" unsure", "Unsure", "", "  ", "ab", " the", " of", " Olymp", " Tokyo"] {
        let v = is_uninformative_token(token, &config);
        println!("{token:>10?}  uninformative={:<5} reason={:?}", v.uninformative, v.reason);
    }

    for answer in ["Olympia", "unsure", "", "the the the the the", "abababababab", "abcabcabcabcX"] {
        println!("{answer:>16?}  {:?}", classify_response(answer, &config));
    }
}
