//! The `vulnkg` command line: one subcommand per pipeline stage plus
//! `pipeline`, all sharing a TOML config and a work directory of artifacts.

pub mod config;
pub mod manifest;
pub mod stages;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vulnkg::relation::{read_review_sheet, score_review_sheet};
use vulnkg::synth::{generate_records, SynthConfig};
use vulnkg::tucker::RankingMode;

use crate::config::{ExtractSource, PipelineConfig, DEFAULT_CONFIG, WORK_DIR_ENV};
use crate::stages::{write_file, Stage, Workspace, REVIEW_SHEET};

#[derive(Debug, Parser)]
#[command(name = "vulnkg", version, about = "Build and query a vulnerability knowledge graph from NVD feeds")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory; falls back to $VULNKG_WORK_DIR, then the config.
    #[arg(long, global = true, env = WORK_DIR_ENV)]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse feeds into records.ndjson.
    Ingest {
        /// Feed file or directory, overriding `paths.feeds`.
        #[arg(long)]
        feeds: Option<PathBuf>,
    },
    /// Distant-label the records into labeled.conll.
    Label,
    /// Train the two-stage NER models.
    TrainNer {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        train_size: Option<usize>,
    },
    /// Score the NER models on the held-out records.
    NerEval,
    /// Tag records and extract ontology triples into triples.tsv.
    Extract {
        #[arg(long, value_parser = parse_source)]
        source: Option<ExtractSource>,
    },
    /// Index, split and reverse-augment the triples.
    KgBuild,
    /// Train TuckER on the training split.
    KgeTrain {
        #[command(flatten)]
        overrides: KgeOverrides,
    },
    /// Rank test triples and compare with a frequency baseline.
    KgeEval {
        #[arg(long)]
        mode: Option<RankingMode>,
    },
    /// Top-k tails for (head, relation, ?).
    Predict {
        #[arg(long)]
        head: String,
        #[arg(long)]
        relation: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        mode: Option<RankingMode>,
    },
    /// Draw a review sheet of extracted triples for manual checking.
    SampleTriples {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Precision of a filled-in review sheet.
    ScoreSheet {
        /// Defaults to the work directory's review sheet.
        sheet: Option<PathBuf>,
    },
    /// Run every stage in order.
    Pipeline,
    /// Hyper-parameter grid search on the validation split.
    GridSearch,
    /// Write a synthetic NVD-shaped feed.
    SynthFeed {
        #[arg(long, default_value_t = 1000)]
        records: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default config with comments.
    DefaultConfig,
}

#[derive(Debug, Args)]
pub struct KgeOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub edim: Option<usize>,
    #[arg(long)]
    pub rdim: Option<usize>,
}

fn parse_source(s: &str) -> Result<ExtractSource, String> {
    match s {
        "ner" => Ok(ExtractSource::Ner),
        "distant" => Ok(ExtractSource::Distant),
        other => Err(format!("expected `ner` or `distant`, got `{other}`")),
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => Stage::Ingest.name(),
            Command::Label => Stage::Label.name(),
            Command::TrainNer { .. } => Stage::TrainNer.name(),
            Command::NerEval => Stage::NerEval.name(),
            Command::Extract { .. } => Stage::Extract.name(),
            Command::KgBuild => Stage::KgBuild.name(),
            Command::KgeTrain { .. } => Stage::KgeTrain.name(),
            Command::KgeEval { .. } => Stage::KgeEval.name(),
            Command::Predict { .. } => "predict",
            Command::SampleTriples { .. } => Stage::SampleTriples.name(),
            Command::ScoreSheet { .. } => "score-sheet",
            Command::Pipeline => "pipeline",
            Command::GridSearch => "grid-search",
            Command::SynthFeed { .. } => "synth-feed",
            Command::DefaultConfig => "default-config",
        }
    }
}

/// Loads the config and applies flag overrides. Precedence for the work
/// directory: `--work-dir`, then the environment, then the config.
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &global.work_dir {
        config.paths.work_dir = dir.clone();
    }
    if let Some(seed) = global.seed {
        config.set_seed(seed);
    }
    match command {
        Command::Ingest { feeds: Some(f) } => config.paths.feeds = f.clone(),
        Command::TrainNer { epochs, train_size } => {
            config.ner.epochs = epochs.unwrap_or(config.ner.epochs);
            config.ner.train_size = train_size.unwrap_or(config.ner.train_size);
        }
        Command::Extract { source: Some(s) } => config.extract.source = *s,
        Command::KgeTrain { overrides: o } => {
            let k = &mut config.kge;
            k.epochs = o.epochs.unwrap_or(k.epochs);
            k.lr = o.lr.unwrap_or(k.lr);
            k.batch_size = o.batch_size.unwrap_or(k.batch_size);
            k.edim = o.edim.unwrap_or(k.edim);
            k.rdim = o.rdim.unwrap_or(k.rdim);
        }
        Command::KgeEval { mode: Some(m) } => config.eval.mode = *m,
        Command::SampleTriples { n: Some(n) } => config.sample.n = *n,
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: Cli) -> Result<()> {
    let name = cli.command.name();
    run_command(cli).with_context(|| format!("stage `{name}` failed"))
}

fn run_command(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::DefaultConfig => {
            std::io::stdout().write_all(DEFAULT_CONFIG.as_bytes())?;
            return Ok(());
        }
        Command::SynthFeed { records, out } => {
            let synth = SynthConfig {
                records: *records,
                seed: cli.global.seed.unwrap_or(SynthConfig::default().seed),
                ..SynthConfig::default()
            };
            let feed = vulnkg::nvd::to_feed_json(&generate_records(&synth));
            let mut json = serde_json::to_string_pretty(&feed)?;
            json.push('\n');
            return write_file(out, json.as_bytes());
        }
        _ => {}
    }

    let config = resolve_config(&cli.global, &cli.command)?;
    let ws = Workspace::new(config.paths.work_dir.clone(), config)?;
    match cli.command {
        Command::Ingest { .. } => ws.run(Stage::Ingest),
        Command::Label => ws.run(Stage::Label),
        Command::TrainNer { .. } => ws.run(Stage::TrainNer),
        Command::NerEval => ws.run(Stage::NerEval),
        Command::Extract { .. } => ws.run(Stage::Extract),
        Command::KgBuild => ws.run(Stage::KgBuild),
        Command::KgeTrain { .. } => ws.run(Stage::KgeTrain),
        Command::KgeEval { .. } => ws.run(Stage::KgeEval),
        Command::SampleTriples { .. } => ws.run(Stage::SampleTriples),
        Command::Pipeline => ws.run_pipeline(),
        Command::GridSearch => ws.grid_search(),
        Command::Predict { head, relation, k, mode } => {
            let prediction = ws.predict(&head, &relation, k, mode.unwrap_or(ws.config.eval.mode))?;
            if let Some(w) = &prediction.warning {
                log::warn!("{w}");
            }
            println!("{}", serde_json::to_string_pretty(&prediction)?);
            Ok(())
        }
        Command::ScoreSheet { sheet } => {
            let path = sheet.unwrap_or_else(|| ws.path(REVIEW_SHEET));
            let file = std::fs::File::open(&path)
                .with_context(|| format!("opening {}; run `vulnkg sample-triples` first", path.display()))?;
            let score = score_review_sheet(&read_review_sheet(file)?);
            println!("{}", serde_json::to_string_pretty(&score)?);
            Ok(())
        }
        Command::SynthFeed { .. } | Command::DefaultConfig => unreachable!("handled above"),
    }
}
