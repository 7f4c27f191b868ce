//! A word is a maximal run of non-whitespace characters. Every length gate,
//! truncation and token count in the crate goes through these helpers.

pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps the first `max_words` words, cutting right after the last kept word.
/// Internal whitespace is preserved; leading whitespace is dropped.
pub fn truncate_words(text: &str, max_words: usize) -> (&str, bool) {
    let text = text.trim_start();
    if max_words == 0 {
        return ("", !text.trim().is_empty());
    }
    let mut seen = 0;
    let mut in_word = false;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_word {
                in_word = false;
                if seen == max_words {
                    let rest = &text[idx..];
                    return (&text[..idx], !rest.trim().is_empty());
                }
            }
        } else if !in_word {
            in_word = true;
            seen += 1;
        }
    }
    (text.trim_end(), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_runs_of_non_whitespace() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("   \n\t "), 0);
        assert_eq!(word_count("a  b\tc\nd"), 4);
        assert_eq!(word_count("don't stop-now!"), 2);
    }

    #[test]
    fn truncation_cuts_at_word_boundary() {
        let (t, cut) = truncate_words("one two  three four", 3);
        assert_eq!(t, "one two  three");
        assert!(cut);
        let (t, cut) = truncate_words("one two", 5);
        assert_eq!(t, "one two");
        assert!(!cut);
        let (t, cut) = truncate_words("one two   ", 2);
        assert_eq!(t, "one two");
        assert!(!cut);
    }

    #[test]
    fn truncation_to_zero() {
        assert_eq!(truncate_words("a b", 0), ("", true));
        assert_eq!(truncate_words("  ", 0), ("", false));
    }
}
