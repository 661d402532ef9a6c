//! Pipeline stages. Each reads the previous stage's artifacts from the work
//! directory and writes its own, then records both in the manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vulnkg::kg::{build_graph, prepare_splits, read_split_dir, write_split_dir, IndexedSplits};
use vulnkg::labeling::{read_conll, write_conll, label_record_with, Gazetteer, LabeledSentence};
use vulnkg::ner::{
    evaluate_ner, load_model, predict, save_model, train_two_stage, IobSource, NerModels,
    TrainOptions,
};
use vulnkg::nvd::{read_feed_file, read_ndjson, write_ndjson, SkipReport};
use vulnkg::relation::{
    assemble_entities, extract_triples, read_triples, sample_for_validation, write_review_sheet,
    write_triples,
};
use vulnkg::tucker::{
    evaluate_ranking, evaluate_with, grid_search, load_checkpoint, predict_tail, save_checkpoint,
    train, FrequencyBaseline, Prediction, RankingMode, RankingReport,
};
use vulnkg::{CveRecord, Triple};

use crate::config::{ExtractSource, PipelineConfig};
use crate::manifest::Manifest;

pub const RECORDS: &str = "records.ndjson";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const LABELED: &str = "labeled.conll";
pub const NER_IOB_MODEL: &str = "ner/iob.model";
pub const NER_DOMAIN_MODEL: &str = "ner/domain.model";
pub const NER_HELDOUT: &str = "ner_heldout.conll";
pub const NER_REPORT: &str = "ner_report.json";
pub const TRIPLES: &str = "triples.tsv";
pub const KG_DIR: &str = "kg";
pub const CHECKPOINT: &str = "tucker.ckpt";
pub const KGE_LOSS: &str = "kge_loss.tsv";
pub const KGE_REPORT: &str = "kge_report.json";
pub const REVIEW_SHEET: &str = "review_sheet.tsv";
pub const GRID_REPORT: &str = "grid_report.json";

/// Files inside [`KG_DIR`].
pub const KG_FILES: [&str; 5] = [
    vulnkg::kg::TRAIN_FILE,
    vulnkg::kg::VALID_FILE,
    vulnkg::kg::TEST_FILE,
    vulnkg::kg::ENTITIES_FILE,
    vulnkg::kg::RELATIONS_FILE,
];

/// Stages in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Label,
    TrainNer,
    NerEval,
    Extract,
    KgBuild,
    KgeTrain,
    KgeEval,
    SampleTriples,
}

impl Stage {
    pub const PIPELINE: [Stage; 9] = [
        Stage::Ingest,
        Stage::Label,
        Stage::TrainNer,
        Stage::NerEval,
        Stage::Extract,
        Stage::KgBuild,
        Stage::KgeTrain,
        Stage::KgeEval,
        Stage::SampleTriples,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::TrainNer => "train-ner",
            Stage::NerEval => "ner-eval",
            Stage::Extract => "extract",
            Stage::KgBuild => "kg-build",
            Stage::KgeTrain => "kge-train",
            Stage::KgeEval => "kge-eval",
            Stage::SampleTriples => "sample-triples",
        }
    }

    /// Artifacts written, relative to the work directory.
    pub fn outputs(self) -> Vec<String> {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        match self {
            Stage::Ingest => v(&[RECORDS, INGEST_REPORT]),
            Stage::Label => v(&[LABELED]),
            Stage::TrainNer => v(&[NER_IOB_MODEL, NER_DOMAIN_MODEL, NER_HELDOUT]),
            Stage::NerEval => v(&[NER_REPORT]),
            Stage::Extract => v(&[TRIPLES]),
            Stage::KgBuild => KG_FILES.iter().map(|f| format!("{KG_DIR}/{f}")).collect(),
            Stage::KgeTrain => v(&[CHECKPOINT, KGE_LOSS]),
            Stage::KgeEval => v(&[KGE_REPORT]),
            Stage::SampleTriples => v(&[REVIEW_SHEET]),
        }
    }
}

/// Every artifact a full `pipeline` run leaves behind.
pub fn pipeline_artifacts() -> Vec<String> {
    let mut out: Vec<String> = Stage::PIPELINE.iter().flat_map(|s| s.outputs()).collect();
    out.push(crate::manifest::MANIFEST.to_string());
    out
}

/// The run context shared by all stages.
pub struct Workspace {
    pub dir: PathBuf,
    pub config: PipelineConfig,
}

impl Workspace {
    pub fn new(dir: PathBuf, config: PipelineConfig) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating work dir {}", dir.display()))?;
        Ok(Self { dir, config })
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.dir.join(artifact)
    }

    /// Path of an upstream artifact, or an error naming the stage that makes it.
    fn input(&self, artifact: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.path(artifact);
        if !p.exists() {
            bail!(
                "missing {}; run `vulnkg {}` first",
                p.display(),
                producer.name()
            );
        }
        Ok(p)
    }

    fn create(&self, artifact: &str) -> Result<BufWriter<File>> {
        let p = self.path(artifact);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    }

    fn write_json<T: Serialize>(&self, artifact: &str, value: &T) -> Result<()> {
        let mut out = self.create(artifact)?;
        serde_json::to_writer_pretty(&mut out, value)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    fn gazetteer(&self) -> Result<Gazetteer> {
        match &self.config.paths.gazetteer {
            Some(p) => Ok(Gazetteer::parse(
                &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            )),
            None => Ok(Gazetteer::starter()),
        }
    }

    fn records(&self) -> Result<Vec<CveRecord>> {
        let p = self.input(RECORDS, Stage::Ingest)?;
        Ok(read_ndjson(File::open(p)?)?)
    }

    fn labeled(&self) -> Result<Vec<LabeledSentence>> {
        let p = self.input(LABELED, Stage::Label)?;
        Ok(read_conll(File::open(p)?)?)
    }

    fn ner_models(&self) -> Result<NerModels> {
        Ok(NerModels {
            iob: load_model(&self.input(NER_IOB_MODEL, Stage::TrainNer)?)?,
            domain: load_model(&self.input(NER_DOMAIN_MODEL, Stage::TrainNer)?)?,
        })
    }

    fn triples(&self) -> Result<Vec<Triple>> {
        let p = self.input(TRIPLES, Stage::Extract)?;
        Ok(read_triples(File::open(p)?)?)
    }

    fn splits(&self) -> Result<IndexedSplits> {
        let dir = self.input(KG_DIR, Stage::KgBuild)?;
        for f in KG_FILES {
            self.input(&format!("{KG_DIR}/{f}"), Stage::KgBuild)?;
        }
        Ok(read_split_dir(&dir)?.1)
    }

    fn checkpoint(&self, splits: &IndexedSplits) -> Result<vulnkg::TuckerParams> {
        let p = self.input(CHECKPOINT, Stage::KgeTrain)?;
        Ok(load_checkpoint(&p, &splits.entities, &splits.relations)?)
    }

    fn excluded_relations(&self, splits: &IndexedSplits) -> Result<Vec<usize>> {
        self.config
            .eval
            .excluded_relations
            .iter()
            .map(|name| {
                splits.relations.id(name).with_context(|| {
                    format!("config field `eval.excluded_relations`: unknown relation `{name}`")
                })
            })
            .collect()
    }

    /// Runs one stage and records it in the manifest.
    pub fn run(&self, stage: Stage) -> Result<()> {
        info!("stage {}", stage.name());
        let inputs = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Label => self.label()?,
            Stage::TrainNer => self.train_ner()?,
            Stage::NerEval => self.ner_eval()?,
            Stage::Extract => self.extract()?,
            Stage::KgBuild => self.kg_build()?,
            Stage::KgeTrain => self.kge_train()?,
            Stage::KgeEval => self.kge_eval()?,
            Stage::SampleTriples => self.sample_triples()?,
        };
        let mut manifest = Manifest::load(&self.dir)?;
        manifest.record(&self.dir, stage.name(), &inputs, &stage.outputs(), &self.config.digest())?;
        manifest.save(&self.dir)
    }

    pub fn run_pipeline(&self) -> Result<()> {
        for stage in Stage::PIPELINE {
            self.run(stage)
                .with_context(|| format!("stage `{}` failed", stage.name()))?;
        }
        Ok(())
    }

    fn feed_files(&self) -> Result<Vec<PathBuf>> {
        self.config.validate_feeds()?;
        let feeds = &self.config.paths.feeds;
        if feeds.is_file() {
            return Ok(vec![feeds.clone()]);
        }
        let mut files: Vec<PathBuf> = fs::read_dir(feeds)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.ends_with(".json") || name.ends_with(".json.gz")
            })
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("no .json or .json.gz feeds in {}", feeds.display());
        }
        Ok(files)
    }

    fn ingest(&self) -> Result<Vec<PathBuf>> {
        let files = self.feed_files()?;
        let mut records: BTreeMap<String, CveRecord> = BTreeMap::new();
        let mut skipped = SkipReport::default();
        let mut filtered_out = 0;
        let mut duplicates = 0;
        for f in &files {
            let feed = read_feed_file(f).with_context(|| format!("reading feed {}", f.display()))?;
            skipped.merge(&feed.skipped);
            for r in feed.records {
                if !self.config.ingest.keep(&r) {
                    filtered_out += 1;
                    continue;
                }
                // Later feeds win, so yearly files can be followed by a
                // "modified" feed.
                if records.insert(r.cve_id.clone(), r).is_some() {
                    duplicates += 1;
                }
            }
        }
        let records: Vec<CveRecord> = records.into_values().collect();
        let mut out = self.create(RECORDS)?;
        write_ndjson(&mut out, &records)?;
        out.flush()?;
        #[derive(Serialize)]
        struct IngestReport {
            feeds: usize,
            records: usize,
            skipped: SkipReport,
            filtered_out: usize,
            duplicates_replaced: usize,
        }
        self.write_json(
            INGEST_REPORT,
            &IngestReport {
                feeds: files.len(),
                records: records.len(),
                skipped,
                filtered_out,
                duplicates_replaced: duplicates,
            },
        )?;
        info!("ingested {} records from {} feed(s)", records.len(), files.len());
        Ok(files)
    }

    fn label(&self) -> Result<Vec<PathBuf>> {
        let records = self.records()?;
        let gaz = self.gazetteer()?;
        let sentences: Vec<LabeledSentence> = records
            .iter()
            .map(|r| LabeledSentence {
                id: Some(r.cve_id.clone()),
                tokens: label_record_with(r, &gaz, &self.config.labeling),
            })
            .collect();
        let mut out = self.create(LABELED)?;
        write_conll(&mut out, &sentences)?;
        out.flush()?;
        let mut inputs = vec![self.path(RECORDS)];
        inputs.extend(self.config.paths.gazetteer.clone());
        Ok(inputs)
    }

    fn train_ner(&self) -> Result<Vec<PathBuf>> {
        let mut corpus = self.labeled()?;
        if corpus.is_empty() {
            bail!("{LABELED} has no sentences");
        }
        let cfg = &self.config.ner;
        corpus.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let (n_train, n_heldout) = cfg.sizes(corpus.len());
        let n_train = n_train.max(1);
        let heldout = &corpus[n_train..(n_train + n_heldout).min(corpus.len())];
        let train: Vec<_> = corpus[..n_train].iter().map(|s| s.tokens.clone()).collect();
        let opts = TrainOptions {
            epochs: cfg.epochs,
            seed: cfg.seed,
        };
        let source = if cfg.gold_iob_features {
            IobSource::Gold
        } else {
            IobSource::Predicted
        };
        let models = train_two_stage(&train, &opts, source)?;
        save_model(&self.ensure_parent(NER_IOB_MODEL)?, &models.iob)?;
        save_model(&self.ensure_parent(NER_DOMAIN_MODEL)?, &models.domain)?;
        let mut out = self.create(NER_HELDOUT)?;
        write_conll(&mut out, heldout)?;
        out.flush()?;
        info!("trained NER on {n_train} records, held out {}", heldout.len());
        Ok(vec![self.path(LABELED)])
    }

    fn ensure_parent(&self, artifact: &str) -> Result<PathBuf> {
        let p = self.path(artifact);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    fn ner_eval(&self) -> Result<Vec<PathBuf>> {
        let models = self.ner_models()?;
        let heldout = read_conll(File::open(self.input(NER_HELDOUT, Stage::TrainNer)?)?)?;
        if heldout.is_empty() {
            bail!("{NER_HELDOUT} is empty; add records or lower `ner.train_size`");
        }
        let gold: Vec<_> = heldout.iter().map(|s| s.tokens.clone()).collect();
        let pred: Vec<_> = heldout.iter().map(|s| predict(&models, &s.words())).collect();
        let report = evaluate_ner(&pred, &gold)?;
        info!(
            "NER micro P {:.3} R {:.3} F1 {:.3}",
            report.micro.precision, report.micro.recall, report.micro.f1
        );
        self.write_json(NER_REPORT, &report)?;
        Ok(vec![
            self.path(NER_IOB_MODEL),
            self.path(NER_DOMAIN_MODEL),
            self.path(NER_HELDOUT),
        ])
    }

    fn extract(&self) -> Result<Vec<PathBuf>> {
        let records = self.records()?;
        let ontology = self.config.extract.ontology()?;
        let (tagged, inputs): (Vec<_>, Vec<PathBuf>) = match self.config.extract.source {
            ExtractSource::Ner => {
                let models = self.ner_models()?;
                let tagged = records
                    .iter()
                    .map(|r| predict(&models, &vulnkg::labeling::tokenize(&r.description)))
                    .collect();
                (tagged, vec![self.path(NER_IOB_MODEL), self.path(NER_DOMAIN_MODEL)])
            }
            ExtractSource::Distant => {
                let labeled = self.labeled()?;
                let by_id: BTreeMap<&str, &LabeledSentence> = labeled
                    .iter()
                    .filter_map(|s| s.id.as_deref().map(|id| (id, s)))
                    .collect();
                let tagged = records
                    .iter()
                    .map(|r| {
                        by_id
                            .get(r.cve_id.as_str())
                            .map(|s| s.tokens.clone())
                            .with_context(|| format!("{} missing from {LABELED}", r.cve_id))
                    })
                    .collect::<Result<_>>()?;
                (tagged, vec![self.path(LABELED)])
            }
        };
        let mut triples = Vec::new();
        for (r, labels) in records.iter().zip(&tagged) {
            let spans = assemble_entities(labels, &r.cve_id, &r.cwe_ids);
            triples.extend(extract_triples(&spans, &ontology));
        }
        triples.sort();
        triples.dedup();
        let mut out = self.create(TRIPLES)?;
        write_triples(&mut out, &triples)?;
        out.flush()?;
        info!("extracted {} triples from {} records", triples.len(), records.len());
        Ok(std::iter::once(self.path(RECORDS)).chain(inputs).collect())
    }

    fn kg_build(&self) -> Result<Vec<PathBuf>> {
        let triples = self.triples()?;
        let kg = build_graph(&triples);
        let cfg = &self.config.kg;
        let splits = prepare_splits(&kg, cfg.ratios, cfg.seed, cfg.augment_order)?;
        write_split_dir(&self.path(KG_DIR), &splits)?;
        info!(
            "graph: {} entities, {} base triples, {}/{}/{} after augmentation",
            kg.entities.len(),
            kg.len(),
            splits.train.len(),
            splits.valid.len(),
            splits.test.len()
        );
        Ok(vec![self.path(TRIPLES)])
    }

    fn kge_train(&self) -> Result<Vec<PathBuf>> {
        let splits = self.splits()?;
        let outcome = train(&splits, &self.config.kge)?;
        save_checkpoint(
            &self.path(CHECKPOINT),
            &outcome.params,
            &splits.entities,
            &splits.relations,
        )?;
        let mut out = self.create(KGE_LOSS)?;
        writeln!(out, "epoch\tloss")?;
        for (i, l) in outcome.losses.iter().enumerate() {
            writeln!(out, "{i}\t{l}")?;
        }
        out.flush()?;
        if let Some(l) = outcome.losses.last() {
            info!("trained {} epochs, final loss {l:.6}", outcome.losses.len());
        }
        Ok(self.kg_paths())
    }

    fn kg_paths(&self) -> Vec<PathBuf> {
        KG_FILES.iter().map(|f| self.path(&format!("{KG_DIR}/{f}"))).collect()
    }

    fn kge_eval(&self) -> Result<Vec<PathBuf>> {
        let splits = self.splits()?;
        let params = self.checkpoint(&splits)?;
        let excluded = self.excluded_relations(&splits)?;
        let known = splits.all_known();
        let eval = if splits.test.is_empty() {
            warn!("test split is empty; evaluating on validation");
            &splits.valid
        } else {
            &splits.test
        };
        let mut model = BTreeMap::new();
        let mut baseline = BTreeMap::new();
        let freq = FrequencyBaseline::fit(&splits.train, splits.entities.len());
        for mode in [RankingMode::Filtered, RankingMode::Raw] {
            model.insert(
                mode.to_string(),
                evaluate_ranking(&params, eval, &known, mode, &excluded)?,
            );
            baseline.insert(
                mode.to_string(),
                evaluate_with(&freq, eval, &known, mode, &excluded)?,
            );
        }
        let primary = &model[&self.config.eval.mode.to_string()];
        info!(
            "{} MRR {:.4}, Hits@1 {:.4}, Hits@10 {:.4}",
            self.config.eval.mode,
            primary.mrr,
            primary.hits(1),
            primary.hits(10)
        );
        #[derive(Serialize)]
        struct KgeReport<'a> {
            mode: RankingMode,
            relations: &'a [String],
            model: BTreeMap<String, RankingReport>,
            frequency_baseline: BTreeMap<String, RankingReport>,
        }
        self.write_json(
            KGE_REPORT,
            &KgeReport {
                mode: self.config.eval.mode,
                relations: splits.relations.names(),
                model,
                frequency_baseline: baseline,
            },
        )?;
        let mut inputs = self.kg_paths();
        inputs.push(self.path(CHECKPOINT));
        Ok(inputs)
    }

    fn sample_triples(&self) -> Result<Vec<PathBuf>> {
        let triples = self.triples()?;
        let n = self.config.sample.n.min(triples.len());
        if n < self.config.sample.n {
            warn!("only {} triples available; sampling all of them", triples.len());
        }
        let rows = sample_for_validation(&triples, n, self.config.sample.seed)?;
        let mut out = self.create(REVIEW_SHEET)?;
        write_review_sheet(&mut out, &rows)?;
        out.flush()?;
        Ok(vec![self.path(TRIPLES)])
    }

    /// Top-`k` tails for a query against the trained model.
    pub fn predict(&self, head: &str, relation: &str, k: usize, mode: RankingMode) -> Result<Prediction> {
        let splits = self.splits()?;
        let params = self.checkpoint(&splits)?;
        let node = resolve_node(&splits, head)
            .with_context(|| format!("`{head}` is not an entity of the graph"))?;
        Ok(predict_tail(&params, &splits, &node, relation, k, mode)?)
    }

    pub fn grid_search(&self) -> Result<()> {
        let splits = self.splits()?;
        let results = grid_search(&splits, &self.config.grid, &self.config.kge)?;
        if let Some(best) = results.first() {
            info!("best mean validation MRR {:.4}", best.mean_valid_mrr);
        }
        self.write_json(GRID_REPORT, &results)
    }
}

/// Accepts a full node name (`cve:CVE-2021-1234`) or a bare surface form
/// (`CVE-2021-1234`, `apache`), trying each entity type's namespace.
pub fn resolve_node(splits: &IndexedSplits, name: &str) -> Option<String> {
    if splits.entities.id(name).is_some() {
        return Some(name.to_string());
    }
    vulnkg::EntityType::ALL.iter().find_map(|t| {
        [name.to_string(), name.to_lowercase()]
            .into_iter()
            .map(|s| vulnkg::relation::node_name(*t, &s))
            .find(|n| splits.entities.id(n).is_some())
    })
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
