//! Vulnerability knowledge graph construction.
//!
//! The crate turns NVD CVE feeds into a typed knowledge graph and learns to
//! fill in missing entities:
//!
//! 1. [`nvd`] parses JSON 1.1 feeds into [`CveRecord`]s with CWE and CPE metadata.
//! 2. [`labeling`] produces distant-supervision IOB/domain labels from CPE
//!    matches, version regexes and a gazetteer.
//! 3. [`ner`] trains a two-stage averaged perceptron (IOB, then domain).
//! 4. [`relation`] assembles entity spans and emits ontology-typed triples.
//! 5. [`kg`] indexes, splits and reverse-augments the triple set.
//! 6. [`tucker`] trains TuckER embeddings and ranks candidate tail entities.
//!
//! [`synth`] generates NVD-shaped feeds for tests and benchmarks.

pub mod error;
pub mod kg;
pub mod labeling;
pub mod ner;
pub mod nvd;
pub mod relation;
pub mod synth;
pub mod tucker;

pub use error::{Error, Result};
pub use kg::{IdTriple, KnowledgeGraph, SplitSet};
pub use labeling::{Domain, Gazetteer, Iob, LabeledToken, Token};
pub use ner::{NerModels, PerceptronModel, Stage};
pub use nvd::{CpeEntry, CpePart, CveRecord};
pub use relation::{EntitySpan, EntityType, Ontology, Triple};
pub use tucker::{RankingReport, TrainConfig, TuckerParams};
