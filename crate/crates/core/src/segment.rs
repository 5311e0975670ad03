//! Rule-based response segmentation into claims.
//!
//! Rules, applied left to right:
//!
//! 1. A newline always ends the current claim.
//! 2. A run of terminators (`.`, `!`, `?`) plus any closing quotes or brackets
//!    ends a claim when it is followed by end of text, or by whitespace and then
//!    (after at most one opening quote or bracket) an uppercase letter or digit.
//! 3. Rule 2 does not fire when the terminator is a single `.` closing a word
//!    from the abbreviation list (case-insensitive).
//!
//! Decimals never split because their period is followed by a digit, not whitespace.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const DEFAULT_ABBREVIATIONS: &[&str] = &["Dr.", "Mr.", "Mrs.", "Ms.", "U.S.", "e.g.", "i.e.", "etc."];

/// One claim of a response. Spans are character offsets, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub index: usize,
    pub text: String,
    pub span_start: usize,
    pub span_end: usize,
}

impl Claim {
    /// A standalone claim covering all of `text` (trimmed text expected).
    pub fn whole(index: usize, text: &str) -> Claim {
        Claim { index, text: text.to_string(), span_start: 0, span_end: text.chars().count() }
    }
}

/// Byte offset of the `char_idx`-th character (or `text.len()` past the end).
pub fn char_to_byte(text: &str, char_idx: usize) -> usize {
    text.char_indices().nth(char_idx).map_or(text.len(), |(b, _)| b)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201D}' | '\u{2019}' | '\u{00BB}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '{' | '\u{201C}' | '\u{2018}' | '\u{00AB}')
}

#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: HashSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Segmenter {
    pub fn with_abbreviations<'a>(entries: impl IntoIterator<Item = &'a str>) -> Self {
        Segmenter { abbreviations: entries.into_iter().map(str::to_lowercase).collect() }
    }

    /// Parses an abbreviation list: one entry per line, `#` starts a comment.
    pub fn parse_abbreviations(source: &str) -> Self {
        Segmenter::with_abbreviations(
            source.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty()),
        )
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse_abbreviations(&std::fs::read_to_string(path)?))
    }

    pub fn abbreviations(&self) -> impl Iterator<Item = &str> {
        self.abbreviations.iter().map(String::as_str)
    }

    pub fn segment(&self, response: &str) -> Vec<Claim> {
        let chars: Vec<(usize, char)> = response.char_indices().collect();
        let byte_at = |i: usize| chars.get(i).map_or(response.len(), |&(b, _)| b);

        let mut cuts = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i].1;
            if c == '\n' {
                cuts.push(byte_at(i));
                i += 1;
            } else if is_terminator(c) {
                let mut j = i;
                while j < chars.len() && is_terminator(chars[j].1) {
                    j += 1;
                }
                let run_end = j;
                while j < chars.len() && is_closer(chars[j].1) {
                    j += 1;
                }
                if self.splits_after(&chars, response, i, run_end, j) {
                    cuts.push(byte_at(j));
                }
                i = j;
            } else {
                i += 1;
            }
        }
        cuts.push(response.len());

        let mut claims = Vec::new();
        let mut start = 0;
        let mut char_pos = 0;
        for cut in cuts {
            let piece = &response[start..cut];
            let lead = piece.len() - piece.trim_start().len();
            let text = piece.trim();
            if !text.is_empty() {
                let span_start = char_pos + piece[..lead].chars().count();
                let span_end = span_start + text.chars().count();
                claims.push(Claim { index: claims.len() + 1, text: text.to_string(), span_start, span_end });
            }
            char_pos += piece.chars().count();
            start = cut;
        }
        claims
    }

    // `run` is the terminator run `[first, run_end)`, `after` is past any closers.
    fn splits_after(&self, chars: &[(usize, char)], text: &str, first: usize, run_end: usize, after: usize) -> bool {
        let Some(&(_, next)) = chars.get(after) else { return true };
        if !next.is_whitespace() {
            return false;
        }
        let mut k = after;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let Some(&(_, mut lead)) = chars.get(k) else { return true };
        if is_opener(lead) {
            match chars.get(k + 1) {
                Some(&(_, c)) => lead = c,
                None => return true,
            }
        }
        if !(lead.is_uppercase() || lead.is_ascii_digit()) {
            return false;
        }
        if run_end - first == 1 && chars[first].1 == '.' {
            let mut s = first;
            while s > 0 && !chars[s - 1].1.is_whitespace() {
                s -= 1;
            }
            let word = text[chars[s].0..chars[first].0 + 1].trim_start_matches(is_opener);
            if self.abbreviations.contains(&word.to_lowercase()) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        Segmenter::default().segment(s).into_iter().map(|c| c.text).collect()
    }

    #[test]
    fn canonical_split() {
        assert_eq!(texts("First sentence. Second sentence."), ["First sentence.", "Second sentence."]);
    }

    #[test]
    fn empty_and_blank() {
        assert!(texts("").is_empty());
        assert!(texts("  \n\t\n ").is_empty());
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(
            texts("Dr. Smith was born in 1880. He wrote stories."),
            ["Dr. Smith was born in 1880.", "He wrote stories."]
        );
        assert_eq!(texts("He moved to the U.S. In 1990 he left."), ["He moved to the U.S. In 1990 he left."]);
    }

    #[test]
    fn decimal_does_not_split() {
        assert_eq!(texts("3.14 is pi."), ["3.14 is pi."]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(texts("It costs approx. five dollars."), ["It costs approx. five dollars."]);
    }

    #[test]
    fn newline_always_splits() {
        assert_eq!(texts("no terminator here\nnext line"), ["no terminator here", "next line"]);
    }

    #[test]
    fn quotes_and_runs() {
        assert_eq!(texts("He said \"Stop!\" Then he left."), ["He said \"Stop!\"", "Then he left."]);
        assert_eq!(texts("Really?! Yes."), ["Really?!", "Yes."]);
        assert_eq!(texts("Wait... (Maybe) not."), ["Wait...", "(Maybe) not."]);
    }

    #[test]
    fn spans_index_characters() {
        let r = "Über alles. Zweiter Satz.";
        let claims = Segmenter::default().segment(r);
        assert_eq!(claims[1].span_start, 12);
        let sliced: String = r.chars().skip(claims[1].span_start).take(claims[1].span_end - claims[1].span_start).collect();
        assert_eq!(sliced, claims[1].text);
        assert_eq!(claims[1].index, 2);
    }

    #[test]
    fn abbreviation_file_parsing() {
        let seg = Segmenter::parse_abbreviations("# titles\nProf.\n\n  Gen.  # military\n");
        let mut entries: Vec<_> = seg.abbreviations().collect();
        entries.sort();
        assert_eq!(entries, ["gen.", "prof."]);
        assert_eq!(seg.segment("Prof. Ada spoke.").len(), 1);
    }
}
