use std::collections::BTreeSet;

use super::tokenize::tokenize;

const STARTER: &str = include_str!("../../data/gazetteer.txt");

/// Dictionary of vulnerability-relevant phrases, stored pre-tokenized and
/// lowercased so lookup is a token-sequence comparison.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    phrases: BTreeSet<Vec<String>>,
    max_len: usize,
}

impl Gazetteer {
    /// Parses one phrase per line; `#` starts a comment line, blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        let mut gaz = Gazetteer::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            gaz.insert(line);
        }
        gaz
    }

    /// The bundled starter list of attack outcomes, vectors and weakness names.
    pub fn starter() -> Self {
        Self::parse(STARTER)
    }

    pub fn insert(&mut self, phrase: &str) {
        let toks: Vec<String> = tokenize(phrase).iter().map(|t| t.lower()).collect();
        if toks.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(toks.len());
        self.phrases.insert(toks);
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_len
    }

    pub fn contains(&self, lowered: &[String]) -> bool {
        self.phrases.contains(lowered)
    }

    pub fn phrases(&self) -> impl Iterator<Item = String> + '_ {
        self.phrases.iter().map(|p| p.join(" "))
    }
}
