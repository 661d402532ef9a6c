//! Token-level NER scoring. A token is a positive when its tag is not `O`;
//! a true positive needs the full `IOB-DOMAIN` tag to match.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{Domain, Iob, LabeledToken};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted_positives: usize,
    pub gold_positives: usize,
    /// No predicted positives: precision is reported as 0.
    pub precision_undefined: bool,
    /// No gold positives: recall is reported as 0.
    pub recall_undefined: bool,
}

impl Scores {
    fn from_counts(tp: usize, pred: usize, gold: usize) -> Self {
        let precision = if pred == 0 { 0.0 } else { tp as f64 / pred as f64 };
        let recall = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            true_positives: tp,
            predicted_positives: pred,
            gold_positives: gold,
            precision_undefined: pred == 0,
            recall_undefined: gold == 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NerReport {
    /// Combined-tag micro scores over all non-`O` tokens.
    pub micro: Scores,
    /// Keyed by domain name; membership by gold or predicted domain.
    pub per_class: BTreeMap<String, Scores>,
    /// Boundary tags only (`B`/`I` vs gold).
    pub iob: Scores,
    /// Domain labels only (non-`NONE` vs gold).
    pub domain: Scores,
    pub tokens: usize,
    pub sentences: usize,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    tp: usize,
    pred: usize,
    gold: usize,
}

impl Counts {
    fn add(&mut self, pred_pos: bool, gold_pos: bool, correct: bool) {
        self.pred += pred_pos as usize;
        self.gold += gold_pos as usize;
        self.tp += (pred_pos && gold_pos && correct) as usize;
    }

    fn scores(self) -> Scores {
        Scores::from_counts(self.tp, self.pred, self.gold)
    }
}

pub fn evaluate_ner(pred: &[Vec<LabeledToken>], gold: &[Vec<LabeledToken>]) -> Result<NerReport> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predicted sentences vs {} gold",
            pred.len(),
            gold.len()
        )));
    }
    let mut micro = Counts::default();
    let mut iob = Counts::default();
    let mut domain = Counts::default();
    let mut per_class: BTreeMap<Domain, Counts> = Domain::ENTITY_TYPES
        .iter()
        .map(|d| (*d, Counts::default()))
        .collect();
    let mut tokens = 0;

    for (s, (p_sent, g_sent)) in pred.iter().zip(gold).enumerate() {
        if p_sent.len() != g_sent.len() {
            return Err(Error::LengthMismatch(format!(
                "sentence {s}: {} predicted tokens vs {} gold",
                p_sent.len(),
                g_sent.len()
            )));
        }
        for (p, g) in p_sent.iter().zip(g_sent) {
            tokens += 1;
            let p_pos = p.iob != Iob::O;
            let g_pos = g.iob != Iob::O;
            let same_tag = p.iob == g.iob && p.domain == g.domain;
            micro.add(p_pos, g_pos, same_tag);
            iob.add(p_pos, g_pos, p.iob == g.iob);
            domain.add(
                p.domain != Domain::None,
                g.domain != Domain::None,
                p.domain == g.domain,
            );
            for (class, counts) in per_class.iter_mut() {
                counts.add(p_pos && p.domain == *class, g_pos && g.domain == *class, same_tag);
            }
        }
    }

    Ok(NerReport {
        micro: micro.scores(),
        per_class: per_class
            .into_iter()
            .map(|(d, c)| (d.as_str().to_string(), c.scores()))
            .collect(),
        iob: iob.scores(),
        domain: domain.scores(),
        tokens,
        sentences: pred.len(),
    })
}
