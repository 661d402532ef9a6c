//! CPE 2.3 formatted-string parsing.
//!
//! Only the part, vendor, product and version components are kept; the
//! remaining attributes (update, edition, language, ...) are not used anywhere
//! downstream.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PREFIX: &str = "cpe:2.3:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpePart {
    Application,
    Os,
    Hardware,
}

impl CpePart {
    pub fn code(self) -> char {
        match self {
            CpePart::Application => 'a',
            CpePart::Os => 'o',
            CpePart::Hardware => 'h',
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        match code {
            "a" => Some(CpePart::Application),
            "o" => Some(CpePart::Os),
            "h" => Some(CpePart::Hardware),
            _ => None,
        }
    }
}

/// One affected platform taken from a CVE's configuration tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CpeEntry {
    pub part: CpePart,
    pub vendor: String,
    pub product: String,
    /// Kept verbatim, including the `*` (any) and `-` (not applicable) markers.
    pub version: String,
}

impl CpeEntry {
    pub fn new(
        part: CpePart,
        vendor: impl Into<String>,
        product: impl Into<String>,
        version: impl Into<String>,
    ) -> Self {
        Self {
            part,
            vendor: vendor.into(),
            product: product.into(),
            version: version.into(),
        }
    }

    /// Parses a `cpe:2.3:` formatted string, honoring backslash escapes.
    pub fn parse(uri: &str) -> Result<Self> {
        let format_err = |reason| Error::CpeFormat {
            uri: uri.to_string(),
            reason,
        };
        if !uri.starts_with(PREFIX) {
            return Err(format_err("expected `cpe:2.3:` prefix"));
        }
        let components = split_components(uri);
        if components.len() < 6 {
            return Err(format_err("fewer than 6 components"));
        }
        let part = CpePart::from_code(&components[2])
            .ok_or_else(|| format_err("part must be one of a, o, h"))?;
        let field = |i: usize| {
            components
                .get(i)
                .cloned()
                .unwrap_or_else(|| "*".to_string())
        };
        Ok(Self {
            part,
            vendor: field(3).to_lowercase(),
            product: field(4).to_lowercase(),
            version: field(5),
        })
    }

    /// Version is a concrete value rather than the `*`/`-` markers.
    pub fn has_concrete_version(&self) -> bool {
        !matches!(self.version.as_str(), "*" | "-" | "")
    }

    /// Serializes back to a (truncated) `cpe:2.3:` string.
    pub fn to_uri(&self) -> String {
        format!(
            "{PREFIX}{}:{}:{}:{}",
            self.part.code(),
            escape(&self.vendor),
            escape(&self.product),
            escape(&self.version)
        )
    }
}

impl FromStr for CpeEntry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for CpeEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_uri())
    }
}

/// Splits on unescaped colons and removes the escaping backslashes.
fn split_components(uri: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = uri.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(next) = chars.next() {
                    current.push(next);
                }
            }
            ':' => out.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    out.push(current);
    out
}

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        if c == ':' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}
