use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector, PAD};
use super::Stage;
use crate::error::{Error, Result};
use crate::labeling::Token;

/// One training sentence for a single stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSentence {
    pub tokens: Vec<Token>,
    pub labels: Vec<String>,
    /// IOB labels fed to the domain stage; `None` for the IOB stage.
    pub iob_context: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 5, seed: 42 }
    }
}

/// Multiclass perceptron with lazily maintained weight averages.
///
/// During training `totals[f][l]` holds the sum of the weight of `(f, l)` over
/// all completed steps up to `stamps[f][l]`; the remainder is settled on the
/// next update or in [`PerceptronModel::finalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronModel {
    stage: Stage,
    labels: Vec<String>,
    weights: HashMap<String, Vec<f64>>,
    totals: HashMap<String, Vec<f64>>,
    stamps: HashMap<String, Vec<u64>>,
    steps: u64,
    finalized: bool,
}

impl PerceptronModel {
    /// Untrained model with all weights zero and the stage's fixed label order.
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            labels: stage.labels().iter().map(|s| s.to_string()).collect(),
            weights: HashMap::new(),
            totals: HashMap::new(),
            stamps: HashMap::new(),
            steps: 0,
            finalized: false,
        }
    }

    pub(crate) fn from_weights(
        stage: Stage,
        labels: Vec<String>,
        weights: HashMap<String, Vec<f64>>,
        steps: u64,
    ) -> Self {
        Self {
            stage,
            labels,
            weights,
            totals: HashMap::new(),
            stamps: HashMap::new(),
            steps,
            finalized: true,
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Current weights: the raw ones during training, the averages after
    /// [`PerceptronModel::finalize`].
    pub fn weights(&self) -> &HashMap<String, Vec<f64>> {
        &self.weights
    }

    pub fn weight(&self, feature: &str, label: &str) -> f64 {
        let Some(l) = self.label_index(label) else {
            return 0.0;
        };
        self.weights.get(feature).map_or(0.0, |w| w[l])
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn scores(&self, features: &FeatureVector) -> Vec<f64> {
        let mut scores = vec![0.0; self.labels.len()];
        for key in features.keys() {
            if let Some(w) = self.weights.get(key) {
                for (s, v) in scores.iter_mut().zip(w) {
                    *s += v;
                }
            }
        }
        scores
    }

    /// Argmax label index; ties go to the lowest index.
    pub fn best(&self, features: &FeatureVector) -> usize {
        argmax(&self.scores(features))
    }

    fn update(&mut self, truth: usize, guess: usize, features: &FeatureVector) {
        let n = self.labels.len();
        let now = self.steps;
        for key in features.keys() {
            let weights = self.weights.entry(key.clone()).or_insert_with(|| vec![0.0; n]);
            let totals = self.totals.entry(key.clone()).or_insert_with(|| vec![0.0; n]);
            let stamps = self.stamps.entry(key.clone()).or_insert_with(|| vec![0; n]);
            for (label, delta) in [(truth, 1.0), (guess, -1.0)] {
                totals[label] += (now - stamps[label]) as f64 * weights[label];
                stamps[label] = now;
                weights[label] += delta;
            }
        }
    }

    /// Replaces every weight by its average over all training steps.
    pub fn finalize(&mut self) {
        if self.finalized {
            return;
        }
        let steps = self.steps;
        if steps > 0 {
            for (key, weights) in self.weights.iter_mut() {
                let totals = &self.totals[key];
                let stamps = &self.stamps[key];
                for l in 0..weights.len() {
                    let total = totals[l] + (steps - stamps[l]) as f64 * weights[l];
                    weights[l] = total / steps as f64;
                }
            }
        }
        self.weights.retain(|_, w| w.iter().any(|v| *v != 0.0));
        self.totals.clear();
        self.stamps.clear();
        self.finalized = true;
    }

    /// Greedy left-to-right decoding, feeding back this model's own predictions.
    pub fn tag(&self, tokens: &[Token], iob_context: Option<&[String]>) -> Vec<usize> {
        let mut out = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let prev = prev_labels(&self.labels, &out);
            let features = extract_features(tokens, i, prev, self.stage, iob_context);
            out.push(self.best(&features));
        }
        out
    }

    pub(crate) fn score_sequence(
        &self,
        tokens: &[Token],
        iob_context: Option<&[String]>,
        mut choose: impl FnMut(usize, &[f64]) -> usize,
    ) -> Vec<usize> {
        let mut out = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let prev = prev_labels(&self.labels, &out);
            let features = extract_features(tokens, i, prev, self.stage, iob_context);
            out.push(choose(i, &self.scores(&features)));
        }
        out
    }
}

fn prev_labels<'a>(labels: &'a [String], so_far: &[usize]) -> [&'a str; 2] {
    let n = so_far.len();
    let get = |back: usize| {
        if n >= back {
            labels[so_far[n - back]].as_str()
        } else {
            PAD
        }
    };
    [get(1), get(2)]
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Trains one stage. Sentence order is reshuffled every epoch with a
/// `ChaCha8Rng` seeded from `opts.seed`; the same seed gives the same model.
pub fn train_ap(
    corpus: &[TaggedSentence],
    stage: Stage,
    opts: &TrainOptions,
) -> Result<PerceptronModel> {
    train_ap_observed(corpus, stage, opts, |_| {})
}

/// [`train_ap`], calling `observe` with the unfinalized model after every
/// token step.
pub fn train_ap_observed(
    corpus: &[TaggedSentence],
    stage: Stage,
    opts: &TrainOptions,
    mut observe: impl FnMut(&PerceptronModel),
) -> Result<PerceptronModel> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = PerceptronModel::new(stage);
    let mut gold: Vec<Vec<usize>> = Vec::with_capacity(corpus.len());
    for sentence in corpus {
        if sentence.labels.len() != sentence.tokens.len() {
            return Err(Error::LengthMismatch(format!(
                "{} tokens but {} labels",
                sentence.tokens.len(),
                sentence.labels.len()
            )));
        }
        match (&sentence.iob_context, stage) {
            (Some(ctx), Stage::Domain) if ctx.len() == sentence.tokens.len() => {}
            (None, Stage::Iob) => {}
            _ => {
                return Err(Error::LengthMismatch(
                    "domain-stage sentences need one IOB context label per token".into(),
                ))
            }
        }
        let ids = sentence
            .labels
            .iter()
            .map(|l| {
                model
                    .label_index(l)
                    .ok_or_else(|| Error::UnknownLabel(l.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        gold.push(ids);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for &s in &order {
            let sentence = &corpus[s];
            let ctx = sentence.iob_context.as_deref();
            let mut predicted: Vec<usize> = Vec::with_capacity(sentence.tokens.len());
            for (i, &truth) in gold[s].iter().enumerate() {
                let prev = prev_labels(&model.labels, &predicted);
                let features = extract_features(&sentence.tokens, i, prev, stage, ctx);
                let guess = model.best(&features);
                if guess != truth {
                    model.update(truth, guess, &features);
                }
                model.steps += 1;
                observe(&model);
                predicted.push(guess);
            }
        }
    }
    model.finalize();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::tokenize;

    fn sentence(text: &str, labels: &[&str]) -> TaggedSentence {
        TaggedSentence {
            tokens: tokenize(text),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            iob_context: None,
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            train_ap(&[], Stage::Iob, &TrainOptions::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn unknown_label_is_named() {
        let err = train_ap(&[sentence("a b", &["O", "X"])], Stage::Iob, &TrainOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("`X`"));
    }

    #[test]
    fn separable_toy_corpus_is_learned() {
        let corpus = vec![
            sentence("apple pie", &["B", "O"]),
            sentence("eat apple", &["O", "B"]),
            sentence("pie apple pie", &["O", "B", "O"]),
            sentence("eat pie", &["O", "O"]),
        ];
        let model = train_ap(&corpus, Stage::Iob, &TrainOptions { epochs: 5, seed: 1 }).unwrap();
        for s in &corpus {
            let got: Vec<&str> = model
                .tag(&s.tokens, None)
                .into_iter()
                .map(|i| model.labels()[i].as_str())
                .collect();
            assert_eq!(got, s.labels);
        }
    }

    #[test]
    fn zero_weights_pick_first_label() {
        let model = PerceptronModel::new(Stage::Domain);
        let ctx = vec!["B".to_string(), "O".to_string()];
        let tags = model.tag(&tokenize("a b"), Some(&ctx));
        assert_eq!(tags, [0, 0]);
        assert_eq!(model.labels()[0], "NONE");
    }

    #[test]
    fn same_seed_same_weights() {
        let corpus = vec![
            sentence("Apache Tomcat 9.0.1 is bad", &["B", "I", "B", "O", "O"]),
            sentence("PHP before 7.4 crashes", &["B", "O", "B", "O"]),
            sentence("nothing here", &["O", "O"]),
        ];
        let opts = TrainOptions { epochs: 4, seed: 9 };
        let a = train_ap(&corpus, Stage::Iob, &opts).unwrap();
        let b = train_ap(&corpus, Stage::Iob, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finalized());
        assert_eq!(a.steps(), 4 * 11);
    }

    #[test]
    fn lazy_average_matches_summed_snapshots() {
        let corpus = vec![
            sentence("Apache Tomcat 9.0.1 is bad", &["B", "I", "B", "O", "O"]),
            sentence("PHP before 7.4 crashes", &["B", "O", "B", "O"]),
            sentence("nothing here", &["O", "O"]),
        ];
        let mut sums: HashMap<String, Vec<f64>> = HashMap::new();
        let mut steps = 0u64;
        let model = train_ap_observed(&corpus, Stage::Iob, &TrainOptions { epochs: 3, seed: 2 }, |m| {
            steps += 1;
            for (k, w) in m.weights() {
                let s = sums.entry(k.clone()).or_insert_with(|| vec![0.0; w.len()]);
                s.iter_mut().zip(w).for_each(|(s, w)| *s += w);
            }
        })
        .unwrap();
        assert_eq!(steps, model.steps());
        for (k, s) in &sums {
            for (l, total) in s.iter().enumerate() {
                let want = total / steps as f64;
                let got = model.weights().get(k).map_or(0.0, |w| w[l]);
                assert!((want - got).abs() < 1e-12, "{k} {l}: {want} vs {got}");
            }
        }
    }
}
