use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_ranking, train_on, RankingMode, TrainConfig};
use crate::error::{Error, Result};
use crate::kg::{IdTriple, IndexedSplits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Applied to both hidden dropouts.
    pub hidden_dropouts: Vec<f64>,
    pub learning_rates: Vec<f64>,
    /// Relation dimensions; the entity dimension comes from the base config.
    pub rdims: Vec<usize>,
    /// Independent training subsets per configuration.
    pub repeats: usize,
    /// Fraction of the training split in each subset.
    pub subset_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            hidden_dropouts: vec![0.0, 0.1, 0.2],
            learning_rates: vec![0.001, 0.01, 0.1],
            rdims: vec![10, 30, 200],
            repeats: 2,
            subset_fraction: 0.5,
        }
    }
}

impl GridSpec {
    pub fn combinations(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &hd in &self.hidden_dropouts {
            for &lr in &self.learning_rates {
                for &rdim in &self.rdims {
                    out.push(TrainConfig {
                        hidden_dropout1: hd,
                        hidden_dropout2: hd,
                        lr,
                        rdim,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub config: TrainConfig,
    pub valid_mrr: Vec<f64>,
    pub mean_valid_mrr: f64,
}

fn subset(train: &[IdTriple], fraction: f64, seed: u64) -> Vec<IdTriple> {
    let n = ((train.len() as f64 * fraction).round() as usize).clamp(1, train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, train.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| train[i]).collect()
}

/// Trains every grid point on `repeats` random training subsets and ranks the
/// configurations by mean filtered validation MRR, best first.
pub fn grid_search(
    splits: &IndexedSplits,
    grid: &GridSpec,
    base: &TrainConfig,
) -> Result<Vec<GridResult>> {
    let configs = grid.combinations(base);
    if configs.is_empty() || grid.repeats == 0 {
        return Err(Error::Config("grid search needs at least one configuration".into()));
    }
    if !(grid.subset_fraction > 0.0 && grid.subset_fraction <= 1.0) {
        return Err(Error::Config("subset_fraction must lie in (0, 1]".into()));
    }
    if splits.train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if splits.valid.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let known = splits.all_known();
    let subsets: Vec<Vec<IdTriple>> = (0..grid.repeats as u64)
        .map(|rep| subset(&splits.train, grid.subset_fraction, base.seed.wrapping_add(rep)))
        .collect();

    let mut results = Vec::with_capacity(configs.len());
    for (i, config) in configs.into_iter().enumerate() {
        let mut mrrs = Vec::with_capacity(subsets.len());
        for train in &subsets {
            let outcome = train_on(train, splits.entities.len(), splits.relations.len(), &config)?;
            let report =
                evaluate_ranking(&outcome.params, &splits.valid, &known, RankingMode::Filtered, &[])?;
            mrrs.push(report.mrr);
        }
        let mean = mrrs.iter().sum::<f64>() / mrrs.len() as f64;
        log::info!("grid point {i}: lr {} dropout {} rdim {} -> MRR {mean:.4}", config.lr, config.hidden_dropout1, config.rdim);
        results.push(GridResult {
            config,
            valid_mrr: mrrs,
            mean_valid_mrr: mean,
        });
    }
    results.sort_by(|a, b| b.mean_valid_mrr.total_cmp(&a.mean_valid_mrr));
    Ok(results)
}
