//! Name matching rule used for class-name lookups and caption filtering.
//!
//! Strings are NFC-normalized and lowercased (then re-normalized, since case
//! mapping can produce decomposed sequences). Matching is a plain substring
//! test on the folded forms, so multi-word names match as contiguous phrases.

use unicode_normalization::UnicodeNormalization;

pub fn fold(s: &str) -> String {
    let lowered: String = s.nfc().collect::<String>().to_lowercase();
    lowered.nfc().collect()
}

/// Case-insensitive equality under the fold rule.
pub fn names_equal(a: &str, b: &str) -> bool {
    fold(a) == fold(b)
}

/// Whether `folded_haystack` (already folded) contains `needle`.
pub fn contains_folded(folded_haystack: &str, needle: &str) -> bool {
    let needle = fold(needle);
    !needle.is_empty() && folded_haystack.contains(&needle)
}
