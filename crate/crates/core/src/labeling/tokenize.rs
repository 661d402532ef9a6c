use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static VERSION_SHAPED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d+(\.[0-9a-zA-Z_-]+)*$").unwrap());

/// A token with character (not byte) offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            text: text.into(),
            start,
            end,
        }
    }

    pub fn lower(&self) -> String {
        self.text.to_lowercase()
    }
}

/// `\d+(\.[0-9a-zA-Z_-]+)*`, i.e. plain integers count as well.
pub fn is_version_shaped(text: &str) -> bool {
    VERSION_SHAPED.is_match(text)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whitespace tokenizer that peels leading and trailing punctuation off into
/// single-character tokens. Interior punctuation stays attached, so
/// `5.4.15.` becomes `5.4.15` + `.` and `cross-site` stays whole.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, chunk_start, i, &mut tokens);
    }
    tokens
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut core_start = start;
    while core_start < end && !is_word_char(chars[core_start]) {
        core_start += 1;
    }
    let mut core_end = end;
    while core_end > core_start && !is_word_char(chars[core_end - 1]) {
        core_end -= 1;
    }
    for (p, c) in chars.iter().enumerate().take(core_start).skip(start) {
        out.push(Token::new(c.to_string(), p, p + 1));
    }
    if core_start < core_end {
        let text: String = chars[core_start..core_end].iter().collect();
        out.push(Token::new(text, core_start, core_end));
    }
    for (p, c) in chars.iter().enumerate().take(end).skip(core_end.max(core_start)) {
        out.push(Token::new(c.to_string(), p, p + 1));
    }
}
