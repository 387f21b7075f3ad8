//! Word normalization shared by the tokenizer, the quality gates and every
//! corpus statistic.
//!
//! A word is a maximal run of non-whitespace characters, lowercased, with
//! leading and trailing ASCII punctuation stripped. Words that are pure
//! punctuation vanish.

/// Splits `text` into normalized word tokens.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let word = raw.trim_matches(|c: char| c.is_ascii_punctuation());
            (!word.is_empty()).then(|| word.to_lowercase())
        })
        .collect()
}

/// Number of normalized words in `text`.
pub fn word_count(text: &str) -> usize {
    normalize(text).len()
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
/// An empty needle is contained everywhere.
pub fn contains_run<T: PartialEq>(haystack: &[T], needle: &[T]) -> bool {
    if needle.is_empty() {
        return true;
    }
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Token-level containment of `needle` text inside `haystack` text.
pub fn text_contains(haystack: &str, needle: &str) -> bool {
    let needle = normalize(needle);
    !needle.is_empty() && contains_run(&normalize(haystack), &needle)
}

/// Replaces every non-overlapping occurrence of `from` in `tokens` with `to`,
/// scanning left to right.
pub fn replace_runs(tokens: &[String], from: &[String], to: &[String]) -> Vec<String> {
    if from.is_empty() {
        return tokens.to_vec();
    }
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i..].starts_with(from) {
            out.extend_from_slice(to);
            i += from.len();
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_case_and_edge_punctuation() {
        assert_eq!(
            normalize("While eating, what are people trying to do?"),
            ["while", "eating", "what", "are", "people", "trying", "to", "do"]
        );
        assert_eq!(normalize("  don't -- \"Fun.\" "), ["don't", "fun"]);
        assert!(normalize("").is_empty());
    }

    #[test]
    fn unicode_whitespace_splits() {
        assert_eq!(normalize("a\u{00a0}b\u{2003}c"), ["a", "b", "c"]);
    }

    #[test]
    fn run_containment() {
        let hay = normalize("people take trips to relax");
        assert!(contains_run(&hay, &normalize("take trips")));
        assert!(!contains_run(&hay, &normalize("trips take")));
        assert!(text_contains("I had fun.", "fun"));
        assert!(!text_contains("funny", "fun"));
    }

    #[test]
    fn replaces_all_runs() {
        let t = normalize("use it being able to use and being able to use");
        let out = replace_runs(&t, &normalize("being able to use"), &normalize("disagreements"));
        assert_eq!(out.join(" "), "use it disagreements and disagreements");
    }
}
