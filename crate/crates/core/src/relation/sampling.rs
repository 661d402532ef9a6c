//! Review sheets for manual validation of extracted triples.

use std::io::{BufRead, BufReader, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Triple;
use crate::error::{Error, Result};

const HEADER: &str = "head\trelation\ttail\tverdict";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    Incorrect,
}

impl Verdict {
    fn parse(raw: &str) -> Option<Option<Self>> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "" => Some(None),
            "y" | "yes" | "1" | "true" | "correct" => Some(Some(Verdict::Correct)),
            "n" | "no" | "0" | "false" | "incorrect" => Some(Some(Verdict::Incorrect)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRow {
    pub triple: Triple,
    pub verdict: Option<Verdict>,
}

/// Uniform sample of `n` triples without replacement, in sampled order.
pub fn sample_for_validation(triples: &[Triple], n: usize, seed: u64) -> Result<Vec<ReviewRow>> {
    if n > triples.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: triples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, triples.len(), n)
        .into_iter()
        .map(|i| ReviewRow {
            triple: triples[i].clone(),
            verdict: None,
        })
        .collect())
}

pub fn write_review_sheet<W: Write>(mut out: W, rows: &[ReviewRow]) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    for row in rows {
        let verdict = match row.verdict {
            None => "",
            Some(Verdict::Correct) => "correct",
            Some(Verdict::Incorrect) => "incorrect",
        };
        let t = &row.triple;
        writeln!(out, "{}\t{}\t{}\t{verdict}", t.head, t.relation, t.tail)?;
    }
    Ok(())
}

/// Reads a (possibly filled-in) sheet. Accepted verdicts: y/yes/1/true/correct,
/// n/no/0/false/incorrect, or blank for not yet reviewed.
pub fn read_review_sheet<R: Read>(input: R) -> Result<Vec<ReviewRow>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.is_empty() || (i == 0 && line == HEADER) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (h, r, t, v) = match cols[..] {
            [h, r, t] => (h, r, t, ""),
            [h, r, t, v] => (h, r, t, v),
            _ => return Err(Error::format(i + 1, "expected head, relation, tail, verdict")),
        };
        let verdict = Verdict::parse(v)
            .ok_or_else(|| Error::format(i + 1, format!("unrecognized verdict `{v}`")))?;
        rows.push(ReviewRow {
            triple: Triple::new(h, r, t),
            verdict,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewScore {
    pub rows: usize,
    pub reviewed: usize,
    pub correct: usize,
    /// `None` when nothing has been reviewed.
    pub precision: Option<f64>,
}

pub fn score_review_sheet(rows: &[ReviewRow]) -> ReviewScore {
    let reviewed = rows.iter().filter(|r| r.verdict.is_some()).count();
    let correct = rows
        .iter()
        .filter(|r| r.verdict == Some(Verdict::Correct))
        .count();
    ReviewScore {
        rows: rows.len(),
        reviewed,
        correct,
        precision: (reviewed > 0).then(|| correct as f64 / reviewed as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples(n: usize) -> Vec<Triple> {
        (0..n)
            .map(|i| Triple::new(format!("cve:CVE-2022-{i:04}"), "has_weakness", "cwe:CWE-79"))
            .collect()
    }

    #[test]
    fn sample_size_and_reproducibility() {
        let all = triples(500);
        let a = sample_for_validation(&all, 100, 7).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, sample_for_validation(&all, 100, 7).unwrap());
        assert_ne!(a, sample_for_validation(&all, 100, 8).unwrap());
        let mut distinct: Vec<_> = a.iter().map(|r| r.triple.clone()).collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 100);
    }

    #[test]
    fn empty_sample_scores_undefined() {
        let rows = sample_for_validation(&triples(5), 0, 1).unwrap();
        assert!(rows.is_empty());
        assert_eq!(score_review_sheet(&rows).precision, None);
    }

    #[test]
    fn oversized_sample_is_an_error() {
        assert!(matches!(
            sample_for_validation(&triples(3), 4, 1),
            Err(Error::SampleTooLarge { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn filled_sheet_with_77_of_100_correct() {
        let mut rows = sample_for_validation(&triples(300), 100, 7).unwrap();
        for (i, row) in rows.iter_mut().enumerate() {
            row.verdict = Some(if i < 77 { Verdict::Correct } else { Verdict::Incorrect });
        }
        let mut buf = Vec::new();
        write_review_sheet(&mut buf, &rows).unwrap();
        let back = read_review_sheet(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let score = score_review_sheet(&back);
        assert_eq!(score.reviewed, 100);
        assert!((score.precision.unwrap() - 0.77).abs() < 1e-12);
    }

    #[test]
    fn blank_sheet_parses_with_no_verdicts() {
        let rows = sample_for_validation(&triples(10), 3, 1).unwrap();
        let mut buf = Vec::new();
        write_review_sheet(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("head\trelation\ttail\tverdict\n"));
        let back = read_review_sheet(text.as_bytes()).unwrap();
        assert!(back.iter().all(|r| r.verdict.is_none()));
        assert!(read_review_sheet("a\tb\tc\tmaybe\n".as_bytes()).is_err());
    }
}
