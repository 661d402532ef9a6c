//! TuckER link prediction: `score(h, r, o) = W ×₁ e_h ×₂ w_r ×₃ e_o`, trained
//! 1-N against every entity with a label-smoothed binary cross-entropy.

mod checkpoint;
mod eval;
mod grid;
mod train;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use eval::{
    evaluate_ranking, evaluate_with, predict_tail, rank_triples, FrequencyBaseline, Prediction,
    RankingMode, RankingReport, RelationScore, TailScorer, TuckerScorer, HITS_AT,
};
pub use grid::{grid_search, GridResult, GridSpec};
pub use train::{loss_and_gradients, train, train_on, Gradients, Query, TrainOutcome};

pub(crate) const STANDARDIZE_EPS: f64 = 1e-5;
const STANDARDIZE_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(alias = "num_iterations")]
    pub epochs: usize,
    pub lr: f64,
    /// Multiplies `lr` after every epoch.
    pub decay_rate: f64,
    pub batch_size: usize,
    pub input_dropout: f64,
    pub hidden_dropout1: f64,
    pub hidden_dropout2: f64,
    pub label_smoothing: f64,
    pub edim: usize,
    pub rdim: usize,
    /// Standardize the hidden vector per batch (running statistics at eval).
    pub standardize_hidden: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.001,
            decay_rate: 1.0,
            batch_size: 128,
            input_dropout: 0.2,
            hidden_dropout1: 0.1,
            hidden_dropout2: 0.0,
            label_smoothing: 0.1,
            edim: 200,
            rdim: 30,
            standardize_hidden: false,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1), got {p}")))
            }
        };
        prob("input_dropout", self.input_dropout)?;
        prob("hidden_dropout1", self.hidden_dropout1)?;
        prob("hidden_dropout2", self.hidden_dropout2)?;
        prob("label_smoothing", self.label_smoothing)?;
        if self.edim == 0 || self.rdim == 0 || self.batch_size == 0 {
            return Err(Error::Config("edim, rdim and batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.decay_rate > 0.0 && self.decay_rate.is_finite()) {
            return Err(Error::Config("lr and decay_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn without_dropout(mut self) -> Self {
        self.input_dropout = 0.0;
        self.hidden_dropout1 = 0.0;
        self.hidden_dropout2 = 0.0;
        self
    }
}

/// Running mean and variance of the hidden vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl Standardizer {
    fn new(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            var: Array1::ones(dim),
        }
    }

    pub(crate) fn update(&mut self, batch_mean: &Array1<f64>, batch_var: &Array1<f64>) {
        let m = STANDARDIZE_MOMENTUM;
        self.mean.zip_mut_with(batch_mean, |a, b| *a = (1.0 - m) * *a + m * b);
        self.var.zip_mut_with(batch_var, |a, b| *a = (1.0 - m) * *a + m * b);
    }

    fn apply(&self, h: &mut Array1<f64>) {
        for ((x, m), v) in h.iter_mut().zip(&self.mean).zip(&self.var) {
            *x = (*x - m) / (v + STANDARDIZE_EPS).sqrt();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerParams {
    /// Entity embeddings, `n_entities × d_e`.
    pub e: Array2<f64>,
    /// Relation embeddings, `n_relations × d_r`.
    pub r: Array2<f64>,
    /// Core tensor, `d_e × d_r × d_e`.
    pub w: Array3<f64>,
    pub standardizer: Option<Standardizer>,
}

/// E and R from N(0, 0.05²), W from U[-1, 1], drawn in that order.
pub fn init_params(
    n_entities: usize,
    n_relations: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<TuckerParams> {
    if n_entities == 0 || n_relations == 0 {
        return Err(Error::Config("need at least one entity and one relation".into()));
    }
    config.validate()?;
    let (de, dr) = (config.edim, config.rdim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.05).expect("valid normal");
    let uniform = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let e = Array2::from_shape_simple_fn((n_entities, de), || normal.sample(&mut rng));
    let r = Array2::from_shape_simple_fn((n_relations, dr), || normal.sample(&mut rng));
    let w = Array3::from_shape_simple_fn((de, dr, de), || uniform.sample(&mut rng));
    Ok(TuckerParams {
        e,
        r,
        w,
        standardizer: config.standardize_hidden.then(|| Standardizer::new(de)),
    })
}

impl TuckerParams {
    pub fn n_entities(&self) -> usize {
        self.e.nrows()
    }

    pub fn n_relations(&self) -> usize {
        self.r.nrows()
    }

    pub fn edim(&self) -> usize {
        self.e.ncols()
    }

    pub fn rdim(&self) -> usize {
        self.r.ncols()
    }

    pub fn num_parameters(&self) -> usize {
        self.e.len() + self.r.len() + self.w.len()
    }

    pub fn is_finite(&self) -> bool {
        self.e.iter().chain(&self.r).chain(&self.w).all(|x| x.is_finite())
    }

    pub(crate) fn check_ids(&self, head: usize, relation: usize) -> Result<()> {
        if head >= self.n_entities() {
            return Err(Error::IdOutOfRange {
                kind: "entity",
                id: head,
                size: self.n_entities(),
            });
        }
        if relation >= self.n_relations() {
            return Err(Error::IdOutOfRange {
                kind: "relation",
                id: relation,
                size: self.n_relations(),
            });
        }
        Ok(())
    }

    /// `W` flattened so that `flat[j, i * d_e + k] = W[i, j, k]`; then
    /// `w_r · flat` is the relation-specific `d_e × d_e` matrix.
    pub(crate) fn core_by_relation(&self) -> Array2<f64> {
        let (de, dr, _) = self.w.dim();
        self.w
            .view()
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((dr, de * de))
            .expect("standard layout")
    }

    /// `Σ_j w_r[j] W[:, j, :]` for one relation.
    pub fn relation_matrix(&self, relation: usize) -> Array2<f64> {
        let de = self.edim();
        self.r
            .row(relation)
            .dot(&self.core_by_relation())
            .into_shape_with_order((de, de))
            .expect("de * de entries")
    }

    fn logits_from(&self, x: &Array1<f64>, wr: ArrayView2<f64>) -> Array1<f64> {
        let mut h = x.dot(&wr);
        if let Some(s) = &self.standardizer {
            s.apply(&mut h);
        }
        self.e.dot(&h)
    }
}

fn dropout_vec(v: &mut [f64], p: f64, rng: &mut impl Rng) {
    if p > 0.0 {
        let keep = 1.0 / (1.0 - p);
        for x in v {
            *x *= if rng.random::<f64>() < p { 0.0 } else { keep };
        }
    }
}

/// Logits of `(head, relation, o)` for every entity `o`.
///
/// In train mode the three dropouts are applied as inverted dropout; eval
/// mode is deterministic. Standardization always uses running statistics
/// here since a single query has no batch.
pub fn score_all_tails(
    params: &TuckerParams,
    head: usize,
    relation: usize,
    train_mode: Option<(&TrainConfig, &mut ChaCha8Rng)>,
) -> Result<Vec<f64>> {
    params.check_ids(head, relation)?;
    let de = params.edim();
    let mut x = params.e.row(head).to_owned();
    let mut wr = params.relation_matrix(relation);
    let Some((config, rng)) = train_mode else {
        return Ok(params.logits_from(&x, wr.view()).to_vec());
    };
    dropout_vec(x.as_slice_mut().expect("contiguous"), config.input_dropout, rng);
    dropout_vec(wr.as_slice_mut().expect("contiguous"), config.hidden_dropout1, rng);
    let mut h = x.dot(&wr);
    if let Some(s) = &params.standardizer {
        s.apply(&mut h);
    }
    dropout_vec(h.as_slice_mut().expect("contiguous"), config.hidden_dropout2, rng);
    debug_assert_eq!(h.len(), de);
    Ok(params.e.dot(&h).to_vec())
}

pub(crate) fn select_rows(m: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    m.select(Axis(0), ids)
}
