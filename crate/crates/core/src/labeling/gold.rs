//! Hand-annotated descriptions for measuring labeling precision.
//!
//! One record per line, tab separated: CVE id, comma-separated CWE ids,
//! space-separated CPE URIs, and the description with entity mentions wrapped
//! as `[[VENDOR Apache]]`, `[[PRODUCT HTTP Server]]` or `[[VERSION 2.4.49]]`.
//! Lines starting with `#` are comments.

use std::collections::BTreeMap;

use serde::Serialize;

use super::tokenize::tokenize;
use super::{Domain, Iob, LabeledToken};
use crate::error::{Error, Result};
use crate::nvd::{cve_year, CpeEntry, CveRecord};

/// `(start, end, domain)` in characters of the plain description.
pub type Span = (usize, usize, Domain);

#[derive(Debug, Clone, PartialEq)]
pub struct GoldRecord {
    pub record: CveRecord,
    pub spans: Vec<Span>,
}

impl GoldRecord {
    /// Gold tags for the tokenized description. A token takes the domain of
    /// the span containing it.
    pub fn labels(&self) -> Vec<LabeledToken> {
        let mut prev_span = None;
        tokenize(&self.record.description)
            .into_iter()
            .map(|token| {
                let hit = self
                    .spans
                    .iter()
                    .position(|&(s, e, _)| token.start >= s && token.end <= e);
                let lt = match hit {
                    Some(i) => LabeledToken {
                        iob: if prev_span == Some(i) { Iob::I } else { Iob::B },
                        domain: self.spans[i].2,
                        token,
                    },
                    None => LabeledToken::outside(token),
                };
                prev_span = hit;
                lt
            })
            .collect()
    }
}

/// Strips the markup, returning the plain text and the marked spans.
pub fn parse_markup(marked: &str) -> Result<(String, Vec<Span>)> {
    let mut plain = String::new();
    let mut n_chars = 0;
    let mut spans = Vec::new();
    let mut rest = marked;
    while let Some(open) = rest.find("[[") {
        let before = &rest[..open];
        plain.push_str(before);
        n_chars += before.chars().count();
        let inner_start = &rest[open + 2..];
        let close = inner_start
            .find("]]")
            .ok_or_else(|| Error::Config(format!("unclosed mark in `{marked}`")))?;
        let inner = &inner_start[..close];
        let (kind, text) = inner
            .split_once(' ')
            .ok_or_else(|| Error::Config(format!("empty mark `{inner}`")))?;
        let domain = match kind.parse::<Domain>()? {
            d @ (Domain::Vendor | Domain::Product | Domain::Version) => d,
            other => return Err(Error::Config(format!("unexpected mark type {other}"))),
        };
        let len = text.chars().count();
        spans.push((n_chars, n_chars + len, domain));
        plain.push_str(text);
        n_chars += len;
        rest = &inner_start[close + 2..];
    }
    plain.push_str(rest);
    Ok((plain, spans))
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, cwes, cpes, marked] = cols[..] else {
            return Err(Error::format(i + 1, "expected 4 tab-separated columns"));
        };
        let year = cve_year(id).ok_or_else(|| Error::format(i + 1, "bad CVE id"))?;
        let (description, spans) = parse_markup(marked)?;
        let cpes = cpes
            .split_whitespace()
            .map(CpeEntry::parse)
            .collect::<Result<Vec<_>>>()?;
        out.push(GoldRecord {
            record: CveRecord {
                cve_id: id.to_string(),
                description,
                cwe_ids: cwes.split(',').filter(|c| !c.is_empty()).map(str::to_string).collect(),
                cpes,
                year,
            },
            spans,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PrecisionReport {
    /// Predicted tokens per domain and how many of them gold agrees with.
    pub predicted: BTreeMap<Domain, usize>,
    pub correct: BTreeMap<Domain, usize>,
    pub precision: f64,
}

/// Token-level precision of `pred` against `gold` over `domains`: of the
/// tokens predicted as one of `domains`, the fraction gold tags with the same
/// domain.
pub fn token_precision(
    pred: &[Vec<LabeledToken>],
    gold: &[Vec<LabeledToken>],
    domains: &[Domain],
) -> Result<PrecisionReport> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predicted vs {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let mut report = PrecisionReport::default();
    for (p, g) in pred.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch("token counts differ".into()));
        }
        for (pt, gt) in p.iter().zip(g) {
            if !domains.contains(&pt.domain) {
                continue;
            }
            *report.predicted.entry(pt.domain).or_default() += 1;
            if gt.domain == pt.domain {
                *report.correct.entry(pt.domain).or_default() += 1;
            }
        }
    }
    let predicted: usize = report.predicted.values().sum();
    let correct: usize = report.correct.values().sum();
    report.precision = if predicted == 0 { 0.0 } else { correct as f64 / predicted as f64 };
    Ok(report)
}
