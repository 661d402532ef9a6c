use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TuckerParams;
use crate::error::{Error, Result};
use crate::kg::{IdTriple, IndexedSplits};
use crate::relation::{EntityType, Ontology};

pub const HITS_AT: [u32; 3] = [1, 3, 10];

/// Anything that can score every candidate tail of a `(head, relation)` query.
pub trait TailScorer: Sync {
    fn n_entities(&self) -> usize;
    fn score_tails(&self, head: usize, relation: usize) -> Vec<f64>;
}

/// Eval-mode TuckER scorer with the per-relation core matrices precomputed.
pub struct TuckerScorer<'a> {
    params: &'a TuckerParams,
    relation_matrices: Vec<Array2<f64>>,
}

impl<'a> TuckerScorer<'a> {
    pub fn new(params: &'a TuckerParams) -> Self {
        let relation_matrices = (0..params.n_relations())
            .map(|r| params.relation_matrix(r))
            .collect();
        Self {
            params,
            relation_matrices,
        }
    }
}

impl TailScorer for TuckerScorer<'_> {
    fn n_entities(&self) -> usize {
        self.params.n_entities()
    }

    fn score_tails(&self, head: usize, relation: usize) -> Vec<f64> {
        let x = self.params.e.row(head).to_owned();
        self.params
            .logits_from(&x, self.relation_matrices[relation].view())
            .to_vec()
    }
}

/// Scores a tail by how often it appears as the tail of the relation in training.
#[derive(Debug, Clone)]
pub struct FrequencyBaseline {
    n_entities: usize,
    counts: HashMap<usize, Vec<f64>>,
}

impl FrequencyBaseline {
    pub fn fit(train: &[IdTriple], n_entities: usize) -> Self {
        let mut counts: HashMap<usize, Vec<f64>> = HashMap::new();
        for t in train {
            counts
                .entry(t.relation)
                .or_insert_with(|| vec![0.0; n_entities])[t.tail] += 1.0;
        }
        Self { n_entities, counts }
    }
}

impl TailScorer for FrequencyBaseline {
    fn n_entities(&self) -> usize {
        self.n_entities
    }

    fn score_tails(&self, _head: usize, relation: usize) -> Vec<f64> {
        self.counts
            .get(&relation)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_entities])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    Raw,
    #[default]
    Filtered,
}

impl std::fmt::Display for RankingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankingMode::Raw => "raw",
            RankingMode::Filtered => "filtered",
        })
    }
}

impl std::str::FromStr for RankingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(RankingMode::Raw),
            "filtered" => Ok(RankingMode::Filtered),
            other => Err(Error::Config(format!("unknown ranking mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub count: usize,
    pub mrr: f64,
    pub hits_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub mode: RankingMode,
    pub hits_at: BTreeMap<u32, f64>,
    pub mrr: f64,
    pub mean_rank: f64,
    pub evaluated: usize,
    pub excluded_relations: Vec<usize>,
    pub excluded_triples: usize,
    pub per_relation: BTreeMap<usize, RelationScore>,
}

impl RankingReport {
    /// Aggregates ranks; `relations[i]` is the relation of the triple ranked `ranks[i]`.
    pub fn from_ranks(ranks: &[f64], relations: &[usize], mode: RankingMode) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let n = ranks.len() as f64;
        let hits_at = HITS_AT
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / n))
            .collect();
        let mut grouped: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (&rank, &rel) in ranks.iter().zip(relations) {
            grouped.entry(rel).or_default().push(rank);
        }
        let per_relation = grouped
            .into_iter()
            .map(|(rel, rs)| {
                let c = rs.len() as f64;
                let score = RelationScore {
                    count: rs.len(),
                    mrr: rs.iter().map(|r| 1.0 / r).sum::<f64>() / c,
                    hits_at_1: rs.iter().filter(|&&r| r <= 1.0).count() as f64 / c,
                };
                (rel, score)
            })
            .collect();
        Ok(Self {
            mode,
            hits_at,
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            mean_rank: ranks.iter().sum::<f64>() / n,
            evaluated: ranks.len(),
            excluded_relations: Vec::new(),
            excluded_triples: 0,
            per_relation,
        })
    }

    pub fn hits(&self, n: u32) -> f64 {
        self.hits_at.get(&n).copied().unwrap_or(f64::NAN)
    }
}

fn known_tails(known: &[IdTriple]) -> HashMap<(usize, usize), Vec<usize>> {
    let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for t in known {
        map.entry((t.head, t.relation)).or_default().push(t.tail);
    }
    for v in map.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    map
}

/// `1 + #{o ≠ t : s(o) > s(t)} + ½ #{o ≠ t : s(o) = s(t)}` over the allowed competitors.
fn rank_of(scores: &[f64], target: usize, filtered: &[usize]) -> f64 {
    let st = scores[target];
    let mut greater = 0usize;
    let mut ties = 0usize;
    for (o, &s) in scores.iter().enumerate() {
        if o == target || filtered.binary_search(&o).is_ok() {
            continue;
        }
        if s > st {
            greater += 1;
        } else if s == st {
            ties += 1;
        }
    }
    1.0 + greater as f64 + 0.5 * ties as f64
}

/// Per-triple ranks, in input order.
pub fn rank_triples<S: TailScorer>(
    scorer: &S,
    eval: &[IdTriple],
    known: &[IdTriple],
    mode: RankingMode,
) -> Result<Vec<f64>> {
    let n = scorer.n_entities();
    if let Some(t) = eval.iter().find(|t| t.head >= n || t.tail >= n) {
        return Err(Error::IdOutOfRange {
            kind: "entity",
            id: t.head.max(t.tail),
            size: n,
        });
    }
    let filter = match mode {
        RankingMode::Raw => HashMap::new(),
        RankingMode::Filtered => known_tails(known),
    };
    let empty = Vec::new();
    Ok(eval
        .par_iter()
        .map(|t| {
            let scores = scorer.score_tails(t.head, t.relation);
            let filtered = filter.get(&(t.head, t.relation)).unwrap_or(&empty);
            rank_of(&scores, t.tail, filtered)
        })
        .collect())
}

/// Hits@{1,3,10} and MRR; triples whose relation is in `excluded` are skipped.
pub fn evaluate_with<S: TailScorer>(
    scorer: &S,
    eval: &[IdTriple],
    known: &[IdTriple],
    mode: RankingMode,
    excluded: &[usize],
) -> Result<RankingReport> {
    if eval.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let kept: Vec<IdTriple> = eval
        .iter()
        .filter(|t| !excluded.contains(&t.relation))
        .copied()
        .collect();
    let ranks = rank_triples(scorer, &kept, known, mode)?;
    let relations: Vec<usize> = kept.iter().map(|t| t.relation).collect();
    let mut report = RankingReport::from_ranks(&ranks, &relations, mode)?;
    report.excluded_relations = excluded.to_vec();
    report.excluded_triples = eval.len() - kept.len();
    Ok(report)
}

pub fn evaluate_ranking(
    params: &TuckerParams,
    eval: &[IdTriple],
    known: &[IdTriple],
    mode: RankingMode,
    excluded: &[usize],
) -> Result<RankingReport> {
    if let Some(t) = eval.iter().find(|t| t.relation >= params.n_relations()) {
        return Err(Error::IdOutOfRange {
            kind: "relation",
            id: t.relation,
            size: params.n_relations(),
        });
    }
    evaluate_with(&TuckerScorer::new(params), eval, known, mode, excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub head: String,
    pub relation: String,
    pub mode: RankingMode,
    pub candidates: Vec<(String, f64)>,
    /// Set when the query asks for CVE ids, which are rarely worth predicting.
    pub warning: Option<String>,
}

/// Top-`k` tails for `(head, relation, ?)`, best first. Filtered mode drops
/// tails already known for the query.
pub fn predict_tail(
    params: &TuckerParams,
    graph: &IndexedSplits,
    head: &str,
    relation: &str,
    k: usize,
    mode: RankingMode,
) -> Result<Prediction> {
    let h = graph.entities.id(head).ok_or_else(|| Error::UnknownName {
        kind: "entity",
        name: head.to_string(),
    })?;
    let r = graph.relations.id(relation).ok_or_else(|| Error::UnknownName {
        kind: "relation",
        name: relation.to_string(),
    })?;
    let scores = super::score_all_tails(params, h, r, None)?;
    let known = match mode {
        RankingMode::Raw => Vec::new(),
        RankingMode::Filtered => {
            let mut v: Vec<usize> = graph
                .all_known()
                .iter()
                .filter(|t| t.head == h && t.relation == r)
                .map(|t| t.tail)
                .collect();
            v.sort_unstable();
            v
        }
    };
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|o| known.binary_search(o).is_err())
        .collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);

    let warning = match Ontology::default().signature(relation) {
        Some((_, EntityType::Cve)) => {
            let msg = format!("`{relation}` predicts CVE ids, which are rarely useful targets");
            log::warn!("{msg}");
            Some(msg)
        }
        _ => None,
    };
    Ok(Prediction {
        head: head.to_string(),
        relation: relation.to_string(),
        mode,
        candidates: order
            .into_iter()
            .map(|o| (graph.entities.names()[o].clone(), scores[o]))
            .collect(),
        warning,
    })
}
