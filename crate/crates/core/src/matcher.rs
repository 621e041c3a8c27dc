//! Token-level and full-answer matching against ground-truth aliases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::normalize_text;

/// Outcome of comparing one token against a record's aliases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    /// Longest common substring length, maximised over aliases.
    pub shared_len: usize,
    /// Index of the first alias that matched.
    pub matched_alias: Option<usize>,
}

/// Length of the longest contiguous run shared by `a` and `b`, counted in
/// Unicode scalar values. Callers normalize first.
pub fn longest_common_substring_len(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    lcs_chars(&a, &b)
}

fn lcs_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // iterate over the longer side so the row stays short
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; inner.len() + 1];
    let mut curr = vec![0usize; inner.len() + 1];
    let mut best = 0;
    for &oc in outer {
        for (j, &ic) in inner.iter().enumerate() {
            curr[j + 1] = if oc == ic { prev[j] + 1 } else { 0 };
            best = best.max(curr[j + 1]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    best
}

/// Does `token` share at least `min_match_len` consecutive characters with
/// any alias?
///
/// Both sides are normalized. An alias whose normalized form is shorter than
/// `min_match_len` only matches on exact equality.
pub fn token_matches(token: &str, answers: &[String], min_match_len: usize) -> Result<MatchResult> {
    if answers.is_empty() {
        return Err(Error::EmptyInput("answers list"));
    }
    if min_match_len == 0 {
        return Err(Error::Config("min_match_len must be positive".into()));
    }
    let token: Vec<char> = normalize_text(token).chars().collect();
    let mut result = MatchResult {
        matched: false,
        shared_len: 0,
        matched_alias: None,
    };
    for (idx, alias) in answers.iter().enumerate() {
        let alias: Vec<char> = normalize_text(alias).chars().collect();
        let shared = lcs_chars(&token, &alias);
        result.shared_len = result.shared_len.max(shared);
        let hit = if alias.len() < min_match_len {
            token == alias
        } else {
            shared >= min_match_len
        };
        if hit && result.matched_alias.is_none() {
            result.matched = true;
            result.matched_alias = Some(idx);
        }
    }
    Ok(result)
}

/// Judges a full generated answer.
///
/// True when the normalized answer contains a normalized alias, or when the
/// token rule holds with a shared run at least as long as the shortest alias.
pub fn answer_correct(final_answer: &str, answers: &[String], min_match_len: usize) -> bool {
    let normalized = normalize_text(final_answer);
    let aliases: Vec<String> = answers.iter().map(|a| normalize_text(a)).collect();
    if aliases
        .iter()
        .any(|a| !a.is_empty() && normalized.contains(a.as_str()))
    {
        return true;
    }
    let Some(shortest) = aliases.iter().map(|a| a.chars().count()).min() else {
        return false;
    };
    match token_matches(final_answer, answers, min_match_len) {
        Ok(m) => m.matched && m.shared_len >= shortest,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_lcs(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut best = 0;
        for i in 0..a.len() {
            for j in i + 1..=a.len() {
                let sub = &a[i..j];
                if b.windows(sub.len()).any(|w| w == sub) {
                    best = best.max(sub.len());
                }
            }
        }
        best
    }

    fn answers(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(longest_common_substring_len("", "abc"), 0);
        assert_eq!(brute_force_lcs("abcdef", "zcdezz"), 3);
        assert_eq!(longest_common_substring_len("abcdef", "zcdezz"), 3);
        assert_eq!(longest_common_substring_len("aaa", "aaa"), 3);
    }

    #[test]
    fn lcs_counts_scalar_values() {
        // "é" is two bytes but one char
        assert_eq!(longest_common_substring_len("café", "xfé"), 2);
        // shared leading byte of distinct multi-byte chars is not a match
        assert_eq!(longest_common_substring_len("é", "è"), 0);
    }

    #[test]
    fn token_match_examples() {
        let m = token_matches(" Olymp", &answers(&["Olympia"]), 3).unwrap();
        assert!(m.matched);
        assert_eq!(m.shared_len, 5);
        assert_eq!(m.matched_alias, Some(0));

        let m = token_matches("cat", &answers(&["dog"]), 3).unwrap();
        assert!(!m.matched);
        assert_eq!(m.shared_len, 0);

        assert_eq!(brute_force_lcs("abxcd", "zzabq"), 2);
        let m = token_matches("abXcd", &answers(&["zzabq"]), 3).unwrap();
        assert!(!m.matched);
        assert_eq!(m.shared_len, 2);

        let m = token_matches("it", &answers(&["it"]), 3).unwrap();
        assert!(m.matched);
    }

    #[test]
    fn short_alias_needs_equality() {
        let m = token_matches("its", &answers(&["it"]), 3).unwrap();
        assert!(!m.matched);
        assert_eq!(m.shared_len, 2);
        let m = token_matches(" IT ", &answers(&["it"]), 3).unwrap();
        assert!(m.matched);
    }

    #[test]
    fn second_alias_reported() {
        let m = token_matches(" Wash", &answers(&["Olympia", "Washington"]), 3).unwrap();
        assert_eq!(m.matched_alias, Some(1));
        assert_eq!(m.shared_len, 4);
    }

    #[test]
    fn empty_answers_rejected() {
        assert!(matches!(
            token_matches("x", &[], 3),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn answer_correct_examples() {
        let gt = answers(&["Olympia"]);
        assert!(answer_correct("The capital is Olympia.", &gt, 3));
        assert!(!answer_correct("Seattle", &gt, 3));
        // containment fails, LCS 5 < alias length 7
        assert!(!"olymp".contains("olympia"));
        assert_eq!(brute_force_lcs("olymp", "olympia"), 5);
        assert!(!answer_correct("Olymp", &gt, 3));
        assert!(answer_correct("  OLYMPIA ", &gt, 3));
        assert!(!answer_correct("anything", &[], 3));
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in "[abcd]{0,30}", b in "[abcd]{0,30}") {
            prop_assert_eq!(longest_common_substring_len(&a, &b), brute_force_lcs(&a, &b));
        }

        #[test]
        fn lcs_symmetric(a in ".{0,20}", b in ".{0,20}") {
            prop_assert_eq!(longest_common_substring_len(&a, &b), longest_common_substring_len(&b, &a));
        }

        #[test]
        fn lcs_monotone_under_append(a in "[ab]{0,15}", b in "[ab]{0,15}", extra in "[abc]{0,4}") {
            let base = longest_common_substring_len(&a, &b);
            let longer_a = a.clone() + &extra;
            let longer_b = b.clone() + &extra;
            prop_assert!(longest_common_substring_len(&longer_a, &b) >= base);
            prop_assert!(longest_common_substring_len(&a, &longer_b) >= base);
        }

        #[test]
        fn token_match_ignores_case_and_padding(tok in "[a-zA-Z]{0,10}", ans in "[a-zA-Z]{1,10}", pad in "[ \t]{0,3}") {
            let gt = vec![ans];
            let plain = token_matches(&tok, &gt, 3).unwrap();
            let noisy = token_matches(&format!("{pad}{}{pad}", tok.to_uppercase()), &gt, 3).unwrap();
            prop_assert_eq!(plain, noisy);
        }
    }
}
