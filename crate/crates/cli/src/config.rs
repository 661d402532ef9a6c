//! Pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vulnkg::kg::AugmentOrder;
use vulnkg::labeling::LabelingConfig;
use vulnkg::nvd::RecordFilter;
use vulnkg::relation::{EntityType, Ontology};
use vulnkg::tucker::{GridSpec, RankingMode};
use vulnkg::TrainConfig;

pub const WORK_DIR_ENV: &str = "VULNKG_WORK_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// A feed file (`.json` or `.json.gz`) or a directory of them.
    pub feeds: PathBuf,
    /// Gazetteer phrase list; empty uses the bundled one.
    pub gazetteer: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            feeds: PathBuf::from("feeds"),
            gazetteer: None,
            work_dir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NerConfig {
    pub epochs: usize,
    /// Records used for training; the rest (up to `heldout_size`) are held out.
    pub train_size: usize,
    pub heldout_size: usize,
    pub seed: u64,
    /// Feed the domain stage gold IOB tags instead of the IOB model's output.
    pub gold_iob_features: bool,
}

impl Default for NerConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            train_size: 4000,
            heldout_size: 1000,
            seed: 42,
            gold_iob_features: false,
        }
    }
}

impl NerConfig {
    /// Train and held-out sizes for a corpus of `n` records. Training never
    /// takes more than 80% so something is always held out.
    pub fn sizes(&self, n: usize) -> (usize, usize) {
        let n_train = self.train_size.min((n as f64 * 0.8).round() as usize);
        (n_train, self.heldout_size.min(n - n_train))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractSource {
    /// Tags from the trained NER models.
    #[default]
    Ner,
    /// The distant-supervision labels themselves.
    Distant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub source: ExtractSource,
    /// Replaces the default ontology when non-empty: `[head, relation, tail]`
    /// with types VENDOR, PRODUCT, VERSION, RELEVANT_TERM, CVE, CWE.
    pub ontology: Vec<(EntityType, String, EntityType)>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            source: ExtractSource::Ner,
            ontology: Vec::new(),
        }
    }
}

impl ExtractConfig {
    pub fn ontology(&self) -> vulnkg::Result<Ontology> {
        if self.ontology.is_empty() {
            return Ok(Ontology::default());
        }
        Ontology::from_edges(self.ontology.iter().map(|(h, r, t)| (*h, r.as_str(), *t)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub augment_order: AugmentOrder,
}

impl Default for KgConfig {
    fn default() -> Self {
        Self {
            ratios: [0.8, 0.1, 0.1],
            seed: 42,
            augment_order: AugmentOrder::SplitThenAugment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: RankingMode,
    /// Relation names left out of the reported metrics.
    pub excluded_relations: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: RankingMode::Filtered,
            excluded_relations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n: 100, seed: 7 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub ingest: RecordFilter,
    pub labeling: LabelingConfig,
    pub ner: NerConfig,
    pub extract: ExtractConfig,
    pub kg: KgConfig,
    pub kge: TrainConfig,
    pub eval: EvalConfig,
    pub grid: GridSpec,
    pub sample: SampleConfig,
}

/// Written by `default-config`.
pub const DEFAULT_CONFIG: &str = r#"# vulnkg pipeline configuration. Relative paths resolve against this file.

[paths]
feeds = "feeds"          # NVD JSON 1.1 feed file or directory (.json / .json.gz)
# gazetteer = "gazetteer.txt"   # one phrase per line; bundled list when unset
work_dir = "work"        # overridden by --work-dir, then VULNKG_WORK_DIR

[ingest]
require_cpe = false
require_cwe = false

[labeling]
priority = ["cpe", "gazetteer", "regex"]   # earlier sources win overlaps
cue_words = ["before", "after", "through", "prior", "to", "earlier", "and", "up", "versions", "version"]
unconditional_min_dots = 2                 # "1.2.3" is a version even without a cue word

[ner]
epochs = 5
train_size = 4000        # training subset of distant-labeled records
heldout_size = 1000
seed = 42
gold_iob_features = false

[extract]
source = "ner"           # or "distant"
# ontology = [["VENDOR", "has_product", "PRODUCT"], ...]   # replaces the default edge set

[kg]
ratios = [0.8, 0.1, 0.1] # train / valid / test
seed = 42
augment_order = "split_then_augment"   # or "augment_then_split"

[kge]
epochs = 300
lr = 0.001
decay_rate = 1.0
batch_size = 128
input_dropout = 0.2
hidden_dropout1 = 0.1
hidden_dropout2 = 0.0
label_smoothing = 0.1
edim = 200
rdim = 30
standardize_hidden = false
seed = 42

[eval]
mode = "filtered"        # or "raw"
excluded_relations = []

[grid]
hidden_dropouts = [0.0, 0.1, 0.2]
learning_rates = [0.001, 0.01, 0.1]
rdims = [10, 30, 200]
repeats = 2
subset_fraction = 0.5

[sample]
n = 100
seed = 7
"#;

impl PipelineConfig {
    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.paths.feeds = base.join(&config.paths.feeds);
        config.paths.work_dir = base.join(&config.paths.work_dir);
        if let Some(g) = &config.paths.gazetteer {
            config.paths.gazetteer = Some(base.join(g));
        }
        Ok(config)
    }

    /// Applies `--seed` to every seeded stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.ner.seed = seed;
        self.kg.seed = seed;
        self.kge.seed = seed;
        self.sample.seed = seed;
    }

    /// Checks values that do not depend on which stage runs.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.kg.ratios.iter().sum();
        if self.kg.ratios.iter().any(|r| r.is_nan() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            bail!("config field `kg.ratios`: must be non-negative and sum to 1, got {:?}", self.kg.ratios);
        }
        self.kge.validate().context("config section `kge`")?;
        if self.ner.epochs == 0 {
            bail!("config field `ner.epochs`: must be at least 1");
        }
        if self.ner.train_size == 0 {
            bail!("config field `ner.train_size`: must be at least 1");
        }
        if self.labeling.priority.is_empty() {
            bail!("config field `labeling.priority`: needs at least one labeling source");
        }
        self.extract.ontology().context("config field `extract.ontology`")?;
        if let Some(g) = &self.paths.gazetteer {
            if !g.is_file() {
                bail!("config field `paths.gazetteer`: {} does not exist", g.display());
            }
        }
        Ok(())
    }

    pub fn validate_feeds(&self) -> Result<()> {
        if !self.paths.feeds.exists() {
            bail!("config field `paths.feeds`: {} does not exist", self.paths.feeds.display());
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form, recorded in the manifest. The work
    /// directory is left out so identical runs in different places agree.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.paths.work_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commented_defaults_match_the_struct() {
        let parsed: PipelineConfig = toml::from_str(DEFAULT_CONFIG).unwrap();
        assert_eq!(parsed, PipelineConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("[kge]\nepoch = 3\n").unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = PipelineConfig::default();
        c.kg.ratios = [0.5, 0.1, 0.1];
        assert!(c.validate().unwrap_err().to_string().contains("kg.ratios"));
        let mut c = PipelineConfig::default();
        c.kge.input_dropout = 1.5;
        assert!(format!("{:#}", c.validate().unwrap_err()).contains("input_dropout"));
        let mut c = PipelineConfig::default();
        c.paths.gazetteer = Some("/no/such/file".into());
        assert!(c.validate().unwrap_err().to_string().contains("paths.gazetteer"));
    }

    #[test]
    fn ner_sizes_always_hold_something_out() {
        let c = NerConfig::default();
        assert_eq!(c.sizes(5000), (4000, 1000));
        assert_eq!(c.sizes(100), (80, 20));
        assert_eq!(c.sizes(20000), (4000, 1000));
        assert_eq!(c.sizes(0), (0, 0));
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let mut c = PipelineConfig::default();
        c.set_seed(9);
        assert_eq!((c.ner.seed, c.kg.seed, c.kge.seed, c.sample.seed), (9, 9, 9, 9));
    }
}
