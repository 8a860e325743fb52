//! Tokenization shared by recognition and text search.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// A token with char offsets and its NFC, lower-cased form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub start: usize,
    pub end: usize,
    pub norm: String,
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Alphanumeric runs and single punctuation characters; whitespace
/// separates. Offsets are in chars.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            let raw: String = chars[start..i].iter().collect();
            tokens.push(Token {
                start,
                end: i,
                norm: raw.nfc().flat_map(char::to_lowercase).collect(),
            });
        } else {
            tokens.push(Token {
                start: i,
                end: i + 1,
                norm: c.to_lowercase().collect(),
            });
            i += 1;
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_punctuation() {
        let t = tokenize("Café-Bar,  NEW\tyork");
        let norms: Vec<&str> = t.iter().map(|t| t.norm.as_str()).collect();
        assert_eq!(norms, ["café", "-", "bar", ",", "new", "york"]);
        assert_eq!((t[4].start, t[4].end), (11, 14));
        assert!(tokenize(" \n ").is_empty());
    }
}
