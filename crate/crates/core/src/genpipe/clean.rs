//! Post-processing of raw provider output.

const DEFAULT_PHRASES: &str = include_str!("../../data/artifact_phrases.txt");

const QUOTE_PAIRS: [(char, char); 2] = [('"', '"'), ('\u{201c}', '\u{201d}')];

/// Strips leading boilerplate phrases and enclosing quotes. The phrase list
/// is configuration: load it from a file or extend the bundled one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaner {
    phrases: Vec<String>,
}

impl Default for Cleaner {
    fn default() -> Self {
        Cleaner::from_lines(DEFAULT_PHRASES)
    }
}

impl Cleaner {
    pub fn new(phrases: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut phrases: Vec<String> = phrases
            .into_iter()
            .map(Into::into)
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect();
        // longest first so "Sure!" never shadows a longer phrase sharing its prefix
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        phrases.dedup();
        Cleaner { phrases }
    }

    /// One phrase per line; blank lines and `#` comments are skipped.
    pub fn from_lines(text: &str) -> Self {
        Cleaner::new(text.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn with_phrase(mut self, phrase: impl Into<String>) -> Self {
        let mut all = std::mem::take(&mut self.phrases);
        all.push(phrase.into());
        Cleaner::new(all)
    }

    fn strip_phrase<'a>(&self, s: &'a str) -> Option<&'a str> {
        self.phrases.iter().find_map(|p| {
            let head = s.get(..p.len())?;
            head.eq_ignore_ascii_case(p).then(|| &s[p.len()..])
        })
    }

    /// Cleans until nothing more can be stripped, so the result is a fixed
    /// point. An empty result means the generation should be discarded.
    pub fn clean(&self, raw: &str) -> String {
        let mut cur = raw.trim();
        loop {
            if let Some(rest) = self.strip_phrase(cur) {
                cur = rest.trim();
                continue;
            }
            if let Some(inner) = strip_enclosing_quotes(cur) {
                cur = inner.trim();
                continue;
            }
            return cur.to_string();
        }
    }
}

/// Cleans with the bundled phrase list.
pub fn clean_generation(raw: &str) -> String {
    Cleaner::default().clean(raw)
}

/// Returns the inside of `s` when the whole of `s` is one quoted span.
/// Quotes inside the span must pair up as open (after whitespace or an
/// opening bracket) and close (before whitespace or punctuation), otherwise
/// `"a" and "b"` would be mistaken for a single quotation.
fn strip_enclosing_quotes(s: &str) -> Option<&str> {
    let (open, close) = QUOTE_PAIRS.into_iter().find(|(o, c)| s.starts_with(*o) && s.ends_with(*c))?;
    if s.chars().count() < 2 {
        return None;
    }
    let inner = &s[open.len_utf8()..s.len() - close.len_utf8()];
    let chars: Vec<char> = inner.chars().collect();
    let mut depth_open = false;
    for (i, &c) in chars.iter().enumerate() {
        let is_open_char = c == open;
        let is_close_char = c == close;
        if !is_open_char && !is_close_char {
            continue;
        }
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        let can_open = prev.is_none_or(|p| p.is_whitespace() || "([{".contains(p));
        let can_close = next.is_none_or(|n| n.is_whitespace() || n.is_ascii_punctuation());
        if !depth_open && is_open_char && can_open {
            depth_open = true;
        } else if depth_open && is_close_char && can_close {
            depth_open = false;
        } else {
            return None;
        }
    }
    (!depth_open).then_some(inner)
}
