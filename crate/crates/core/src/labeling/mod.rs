//! Distant-supervision labeling of CVE descriptions.
//!
//! Three labeling functions produce IOB + domain tags without human
//! annotation: CPE metadata matching, version-phrase rules and a gazetteer of
//! vulnerability-relevant phrases. [`label_record`] merges them by priority.

mod conll;
mod gazetteer;
pub mod gold;
mod labelers;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use conll::{read_conll, write_conll, LabeledSentence};
pub use gazetteer::Gazetteer;
pub use labelers::{
    label_record, label_record_with, label_with_cpe, label_with_gazetteer, label_with_regex,
    label_with_regex_config, LabelSource, LabelingConfig, DEFAULT_CUE_WORDS,
};
pub use tokenize::{is_version_shaped, tokenize, Token};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Iob {
    B,
    I,
    O,
}

impl Iob {
    pub fn as_str(self) -> &'static str {
        match self {
            Iob::B => "B",
            Iob::I => "I",
            Iob::O => "O",
        }
    }
}

impl fmt::Display for Iob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Iob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "B" => Ok(Iob::B),
            "I" => Ok(Iob::I),
            "O" => Ok(Iob::O),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Entity class of a token. `None` pairs with [`Iob::O`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Domain {
    Vendor,
    Product,
    Version,
    RelevantTerm,
    None,
}

impl Domain {
    pub const ENTITY_TYPES: [Domain; 4] = [
        Domain::Vendor,
        Domain::Product,
        Domain::Version,
        Domain::RelevantTerm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Vendor => "VENDOR",
            Domain::Product => "PRODUCT",
            Domain::Version => "VERSION",
            Domain::RelevantTerm => "RELEVANT_TERM",
            Domain::None => "NONE",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "VENDOR" => Ok(Domain::Vendor),
            "PRODUCT" => Ok(Domain::Product),
            "VERSION" => Ok(Domain::Version),
            "RELEVANT_TERM" => Ok(Domain::RelevantTerm),
            "NONE" => Ok(Domain::None),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledToken {
    pub token: Token,
    pub iob: Iob,
    pub domain: Domain,
}

impl LabeledToken {
    pub fn outside(token: Token) -> Self {
        Self {
            token,
            iob: Iob::O,
            domain: Domain::None,
        }
    }

    /// Combined tag such as `B-PRODUCT`, or `O`.
    pub fn tag(&self) -> String {
        match self.iob {
            Iob::O => "O".to_string(),
            iob => format!("{iob}-{}", self.domain),
        }
    }
}

/// `O` iff `NONE`, and every `I` continues a span of the same domain.
pub fn is_well_formed(labels: &[LabeledToken]) -> bool {
    let mut prev: Option<&LabeledToken> = None;
    for lt in labels {
        if (lt.iob == Iob::O) != (lt.domain == Domain::None) {
            return false;
        }
        if lt.iob == Iob::I {
            match prev {
                Some(p) if p.iob != Iob::O && p.domain == lt.domain => {}
                _ => return false,
            }
        }
        prev = Some(lt);
    }
    true
}
