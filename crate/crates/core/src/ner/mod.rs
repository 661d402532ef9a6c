//! Two-stage averaged-perceptron NER.
//!
//! The first model tags IOB boundaries. The second assigns a domain to each
//! token and sees the first model's IOB predictions as features, so at
//! inference time only the raw description is needed.

mod checkpoint;
mod eval;
mod features;
mod perceptron;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_model, read_model, save_model, write_model};
pub use eval::{evaluate_ner, NerReport, Scores};
pub use features::{extract_features, FeatureVector, FEATURE_TEMPLATES, PAD};
pub use perceptron::{train_ap, train_ap_observed, PerceptronModel, TaggedSentence, TrainOptions};

use crate::error::{Error, Result};
use crate::labeling::{Domain, Iob, LabeledToken, Token};

const IOB_LABELS: [&str; 3] = ["O", "B", "I"];
const DOMAIN_LABELS: [&str; 5] = ["NONE", "VENDOR", "PRODUCT", "VERSION", "RELEVANT_TERM"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Iob,
    Domain,
}

impl Stage {
    /// Fixed label order; index 0 wins argmax ties.
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Stage::Iob => &IOB_LABELS,
            Stage::Domain => &DOMAIN_LABELS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Iob => "iob",
            Stage::Domain => "domain",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iob" => Ok(Stage::Iob),
            "domain" => Ok(Stage::Domain),
            other => Err(Error::Checkpoint(format!("unknown stage `{other}`"))),
        }
    }
}

/// Where the domain stage's IOB features come from during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IobSource {
    /// Gold IOB labels from the corpus.
    Gold,
    /// Predictions of the just-trained IOB model, matching inference.
    #[default]
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerModels {
    pub iob: PerceptronModel,
    pub domain: PerceptronModel,
}

fn iob_sentence(tokens: &[LabeledToken]) -> TaggedSentence {
    TaggedSentence {
        tokens: tokens.iter().map(|t| t.token.clone()).collect(),
        labels: tokens.iter().map(|t| t.iob.as_str().to_string()).collect(),
        iob_context: None,
    }
}

/// Trains the IOB model, then the domain model on top of it.
pub fn train_two_stage(
    corpus: &[Vec<LabeledToken>],
    opts: &TrainOptions,
    iob_source: IobSource,
) -> Result<NerModels> {
    let iob_corpus: Vec<TaggedSentence> = corpus.iter().map(|s| iob_sentence(s)).collect();
    let iob = train_ap(&iob_corpus, Stage::Iob, opts)?;

    let domain_corpus: Vec<TaggedSentence> = corpus
        .iter()
        .zip(iob_corpus)
        .map(|(sentence, iob_s)| {
            let context = match iob_source {
                IobSource::Gold => iob_s.labels,
                IobSource::Predicted => predict_iob(&iob, &iob_s.tokens)
                    .into_iter()
                    .map(|t| t.as_str().to_string())
                    .collect(),
            };
            TaggedSentence {
                tokens: iob_s.tokens,
                labels: sentence
                    .iter()
                    .map(|t| t.domain.as_str().to_string())
                    .collect(),
                iob_context: Some(context),
            }
        })
        .collect();
    let domain = train_ap(&domain_corpus, Stage::Domain, opts)?;
    Ok(NerModels { iob, domain })
}

/// Greedy IOB tagging with the repair `I` after `O` (or at the start) → `B`.
pub fn predict_iob(model: &PerceptronModel, tokens: &[Token]) -> Vec<Iob> {
    let labels = model.labels();
    let mut out: Vec<Iob> = Vec::with_capacity(tokens.len());
    // Decode with the repaired labels so the history features see valid IOB.
    model.score_sequence(tokens, None, |i, scores| {
        let mut best = perceptron::argmax(scores);
        let mut iob: Iob = labels[best].parse().unwrap_or(Iob::O);
        if iob == Iob::I && (i == 0 || out[i - 1] == Iob::O) {
            iob = Iob::B;
            best = labels.iter().position(|l| l == "B").unwrap_or(best);
        }
        out.push(iob);
        best
    });
    out
}

/// Full inference: IOB tags, then domains conditioned on them.
///
/// The result is always well-formed: `O` tokens get `NONE`; a tagged token
/// whose best domain is `NONE` takes its best entity domain instead; an `I`
/// whose domain differs from its predecessor's starts a new span.
pub fn predict(models: &NerModels, tokens: &[Token]) -> Vec<LabeledToken> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let iob = predict_iob(&models.iob, tokens);
    let context: Vec<String> = iob.iter().map(|t| t.as_str().to_string()).collect();
    let labels = models.domain.labels();
    let domains: Vec<Domain> = models
        .domain
        .score_sequence(tokens, Some(&context), |i, scores| {
            if iob[i] == Iob::O {
                return labels.iter().position(|l| l == "NONE").unwrap_or(0);
            }
            let mut best = None;
            for (k, s) in scores.iter().enumerate() {
                if labels[k] == "NONE" {
                    continue;
                }
                if best.is_none_or(|b: usize| *s > scores[b]) {
                    best = Some(k);
                }
            }
            best.unwrap_or(0)
        })
        .into_iter()
        .map(|k| labels[k].parse().unwrap_or(Domain::None))
        .collect();

    let mut out: Vec<LabeledToken> = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        let mut tag = iob[i];
        let domain = if tag == Iob::O { Domain::None } else { domains[i] };
        if tag == Iob::I {
            let continues = out
                .last()
                .is_some_and(|p| p.iob != Iob::O && p.domain == domain);
            if !continues {
                tag = Iob::B;
            }
        }
        out.push(LabeledToken {
            token: tok.clone(),
            iob: tag,
            domain,
        });
    }
    out
}
