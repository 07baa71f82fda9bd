//! Tokenization shared by the vocabulary, TF-IDF features and the mutators.

/// Lowercase runs of Unicode letters and digits. Anything else, including
/// zero-width joiners, splits tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}

/// Byte ranges of the letter/digit runs in `text`.
pub fn token_spans(text: &str) -> Vec<std::ops::Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            spans.push(s..i);
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits() {
        assert_eq!(tokenize("Hello, WORLD 42x"), vec!["hello", "world", "42x"]);
        assert!(tokenize("  ,.; ").is_empty());
    }

    #[test]
    fn unicode_letters_and_zero_width() {
        assert_eq!(tokenize("Grüße"), vec!["grüße"]);
        assert_eq!(tokenize("fr\u{200d}ee"), vec!["fr", "ee"]);
        // Cyrillic е keeps the token intact but different from "free".
        assert_eq!(tokenize("fr\u{0435}e"), vec!["fr\u{0435}e"]);
    }
}
