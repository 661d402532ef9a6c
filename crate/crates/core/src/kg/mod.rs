//! Triple store: dense indexing, train/valid/test splitting and reverse
//! augmentation.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::relation::{read_triples, write_triples, Triple, REVERSE_SUFFIX};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const ENTITIES_FILE: &str = "entities.tsv";
pub const RELATIONS_FILE: &str = "relations.tsv";

/// Bijection between names and dense ids `0..n`, assigned in lexicographic order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Index {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Index {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        let names: Vec<String> = sorted.into_iter().collect();
        let ids = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            writeln!(out, "{i}\t{name}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(input: R) -> Result<Self> {
        let mut names = Vec::new();
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (id, name) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(i + 1, "expected id<TAB>name"))?;
            if id.parse::<usize>().ok() != Some(names.len()) {
                return Err(Error::format(i + 1, format!("ids must be dense, got `{id}`")));
            }
            names.push(name.to_string());
        }
        let index = Index::from_names(names.iter().cloned());
        if index.names != names {
            return Err(Error::format(0, "index names must be unique and sorted"));
        }
        Ok(index)
    }

    /// SHA-256 over the TSV serialization, used to pin checkpoints to an index.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdTriple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl IdTriple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// An immutable, deduplicated, densely indexed triple set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub entities: Index,
    pub relations: Index,
    triples: Vec<IdTriple>,
}

impl KnowledgeGraph {
    pub fn triples(&self) -> &[IdTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn to_named(&self, t: &IdTriple) -> Triple {
        Triple::new(
            self.entities.names[t.head].clone(),
            self.relations.names[t.relation].clone(),
            self.entities.names[t.tail].clone(),
        )
    }

    pub fn named_triples(&self) -> Vec<Triple> {
        self.triples.iter().map(|t| self.to_named(t)).collect()
    }

    /// Adds `(t, r_reverse, h)` for every `(h, r, t)`; the result is re-indexed.
    pub fn augment_reverse(&self) -> Result<KnowledgeGraph> {
        Ok(build_graph(&augment_reverse(&self.named_triples())?))
    }

    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        write_triples(out, &self.named_triples())
    }

    pub fn read_tsv<R: Read>(input: R) -> Result<Self> {
        Ok(build_graph(&read_triples(input)?))
    }
}

/// Indexes and deduplicates triples. Ids are assigned lexicographically and
/// triples are stored sorted by id.
pub fn build_graph(triples: &[Triple]) -> KnowledgeGraph {
    let entities = Index::from_names(
        triples
            .iter()
            .flat_map(|t| [t.head.as_str(), t.tail.as_str()]),
    );
    let relations = Index::from_names(triples.iter().map(|t| t.relation.as_str()));
    let ids: BTreeSet<IdTriple> = triples
        .iter()
        .map(|t| {
            IdTriple::new(
                entities.ids[&t.head],
                relations.ids[&t.relation],
                entities.ids[&t.tail],
            )
        })
        .collect();
    KnowledgeGraph {
        entities,
        relations,
        triples: ids.into_iter().collect(),
    }
}

/// Appends the reverse of every triple. Refuses input that already holds a
/// `_reverse` relation.
pub fn augment_reverse(triples: &[Triple]) -> Result<Vec<Triple>> {
    if let Some(t) = triples.iter().find(|t| t.relation.ends_with(REVERSE_SUFFIX)) {
        return Err(Error::AlreadyAugmented(t.relation.clone()));
    }
    let mut out = Vec::with_capacity(triples.len() * 2);
    out.extend(triples.iter().cloned());
    out.extend(triples.iter().map(Triple::reversed));
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl SplitSet {
    pub fn augment_reverse(&self) -> Result<SplitSet> {
        Ok(SplitSet {
            train: augment_reverse(&self.train)?,
            valid: augment_reverse(&self.valid)?,
            test: augment_reverse(&self.test)?,
        })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// When reverse augmentation happens relative to splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOrder {
    /// Split base triples, then augment each split. No test triple's reverse
    /// can reach training.
    #[default]
    SplitThenAugment,
    /// Augment the whole graph, then split. Reverses leak across splits; kept
    /// for comparison runs.
    AugmentThenSplit,
}

fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios(ratios));
    }
    Ok(())
}

fn partition(mut triples: Vec<Triple>, ratios: [f64; 3], seed: u64) -> Result<SplitSet> {
    check_ratios(ratios)?;
    let n = triples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.shuffle(&mut rng);
    let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
    let n_valid = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test = triples.split_off(n_train + n_valid);
    let valid = triples.split_off(n_train);
    Ok(SplitSet {
        train: triples,
        valid,
        test,
    })
}

/// Uniform random partition of the graph's (base) triples.
pub fn split_triples(kg: &KnowledgeGraph, ratios: [f64; 3], seed: u64) -> Result<SplitSet> {
    partition(kg.named_triples(), ratios, seed)
}

/// Splits and augments in the requested order.
pub fn prepare_splits(
    kg: &KnowledgeGraph,
    ratios: [f64; 3],
    seed: u64,
    order: AugmentOrder,
) -> Result<SplitSet> {
    match order {
        AugmentOrder::SplitThenAugment => split_triples(kg, ratios, seed)?.augment_reverse(),
        AugmentOrder::AugmentThenSplit => {
            partition(augment_reverse(&kg.named_triples())?, ratios, seed)
        }
    }
}

/// Splits mapped onto one shared entity/relation index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexedSplits {
    pub entities: Index,
    pub relations: Index,
    pub train: Vec<IdTriple>,
    pub valid: Vec<IdTriple>,
    pub test: Vec<IdTriple>,
}

impl IndexedSplits {
    pub fn from_splits(splits: &SplitSet) -> Self {
        let entities = Index::from_names(
            splits
                .iter_all()
                .flat_map(|t| [t.head.as_str(), t.tail.as_str()]),
        );
        let relations = Index::from_names(splits.iter_all().map(|t| t.relation.as_str()));
        let map = |ts: &[Triple]| -> Vec<IdTriple> {
            ts.iter()
                .map(|t| {
                    IdTriple::new(
                        entities.ids[&t.head],
                        relations.ids[&t.relation],
                        entities.ids[&t.tail],
                    )
                })
                .collect()
        };
        Self {
            train: map(&splits.train),
            valid: map(&splits.valid),
            test: map(&splits.test),
            entities,
            relations,
        }
    }

    /// Union of every split, for filtered ranking.
    pub fn all_known(&self) -> Vec<IdTriple> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .copied()
            .collect()
    }

    pub fn named(&self, t: &IdTriple) -> Triple {
        Triple::new(
            self.entities.names[t.head].clone(),
            self.relations.names[t.relation].clone(),
            self.entities.names[t.tail].clone(),
        )
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Writes `train.tsv`, `valid.tsv`, `test.tsv`, `entities.tsv` and `relations.tsv`.
pub fn write_split_dir(dir: &Path, splits: &SplitSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let indexed = IndexedSplits::from_splits(splits);
    write_file(&dir.join(TRAIN_FILE), |w| write_triples(w, &splits.train))?;
    write_file(&dir.join(VALID_FILE), |w| write_triples(w, &splits.valid))?;
    write_file(&dir.join(TEST_FILE), |w| write_triples(w, &splits.test))?;
    write_file(&dir.join(ENTITIES_FILE), |w| indexed.entities.write_tsv(w))?;
    write_file(&dir.join(RELATIONS_FILE), |w| indexed.relations.write_tsv(w))?;
    Ok(())
}

pub fn read_split_dir(dir: &Path) -> Result<(SplitSet, IndexedSplits)> {
    let read = |name: &str| -> Result<Vec<Triple>> { read_triples(File::open(dir.join(name))?) };
    let splits = SplitSet {
        train: read(TRAIN_FILE)?,
        valid: read(VALID_FILE)?,
        test: read(TEST_FILE)?,
    };
    let indexed = IndexedSplits::from_splits(&splits);
    let entities = Index::read_tsv(File::open(dir.join(ENTITIES_FILE))?)?;
    let relations = Index::read_tsv(File::open(dir.join(RELATIONS_FILE))?)?;
    if entities != indexed.entities {
        return Err(Error::IndexMismatch { which: "entity" });
    }
    if relations != indexed.relations {
        return Err(Error::IndexMismatch { which: "relation" });
    }
    Ok((splits, indexed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(h: &str, r: &str, tl: &str) -> Triple {
        Triple::new(h, r, tl)
    }

    fn numbered(n: usize) -> Vec<Triple> {
        (0..n)
            .map(|i| t(&format!("e{i}"), if i % 3 == 0 { "r1" } else { "r2" }, &format!("e{}", i + 1)))
            .collect()
    }

    #[test]
    fn build_counts_entities_and_triples() {
        let kg = build_graph(&[t("a", "r", "b"), t("b", "r", "c"), t("c", "s", "d")]);
        assert_eq!(kg.entities.len(), 4);
        assert_eq!(kg.len(), 3);
        assert_eq!(kg.entities.id("a"), Some(0));
        assert_eq!(kg.entities.id("d"), Some(3));
    }

    #[test]
    fn duplicates_are_stored_once() {
        let kg = build_graph(&[t("a", "r", "b"), t("a", "r", "b")]);
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn reverse_of_single_triple() {
        let out = augment_reverse(&[t("a", "has_product", "b")]).unwrap();
        assert_eq!(out, vec![t("a", "has_product", "b"), t("b", "has_product_reverse", "a")]);
        let kg = build_graph(&[t("a", "has_product", "b")]).augment_reverse().unwrap();
        assert_eq!(kg.len(), 2);
        assert_eq!(kg.relations.len(), 2);
    }

    #[test]
    fn reverse_of_empty_graph() {
        assert!(augment_reverse(&[]).unwrap().is_empty());
        assert!(KnowledgeGraph::default().augment_reverse().unwrap().is_empty());
    }

    #[test]
    fn double_augmentation_is_refused() {
        let once = augment_reverse(&[t("a", "r", "b")]).unwrap();
        assert!(matches!(augment_reverse(&once), Err(Error::AlreadyAugmented(_))));
    }

    #[test]
    fn ten_triples_split_8_1_1() {
        let kg = build_graph(&numbered(10));
        let s = split_triples(&kg, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, split_triples(&kg, [0.8, 0.1, 0.1], 3).unwrap());
    }

    #[test]
    fn invalid_ratios() {
        let kg = build_graph(&numbered(10));
        assert!(split_triples(&kg, [0.8, 0.1, 0.2], 1).is_err());
        assert!(split_triples(&kg, [1.2, -0.1, -0.1], 1).is_err());
    }

    #[test]
    fn two_million_split_arithmetic() {
        // 2M base triples: 1.6M / 200k / 200k, each doubled afterwards.
        let n = 2_000_000usize;
        let sizes = [0.8, 0.1, 0.1].map(|r: f64| (r * n as f64).round() as usize);
        assert_eq!(sizes, [1_600_000, 200_000, 200_000]);
    }

    #[test]
    fn split_then_augment_does_not_leak() {
        let kg = build_graph(&numbered(200));
        let s = prepare_splits(&kg, [0.8, 0.1, 0.1], 5, AugmentOrder::SplitThenAugment).unwrap();
        let train: BTreeSet<&Triple> = s.train.iter().collect();
        for test in s.test.iter().filter(|t| !t.relation.ends_with(REVERSE_SUFFIX)) {
            assert!(!train.contains(test));
            assert!(!train.contains(&test.reversed()));
        }
        assert_eq!(s.len(), 400);
    }

    #[test]
    fn augment_then_split_leaks() {
        let kg = build_graph(&numbered(200));
        let s = prepare_splits(&kg, [0.8, 0.1, 0.1], 5, AugmentOrder::AugmentThenSplit).unwrap();
        let train: BTreeSet<&Triple> = s.train.iter().collect();
        let leaked = s
            .test
            .iter()
            .filter(|t| !t.relation.ends_with(REVERSE_SUFFIX))
            .filter(|t| train.contains(&t.reversed()))
            .count();
        assert!(leaked > 0);
        assert_eq!(s.len(), 400);
    }

    #[test]
    fn graph_tsv_round_trip_is_byte_identical() {
        let kg = build_graph(&numbered(30));
        let mut a = Vec::new();
        kg.write_tsv(&mut a).unwrap();
        let back = KnowledgeGraph::read_tsv(a.as_slice()).unwrap();
        let mut b = Vec::new();
        back.write_tsv(&mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back, kg);
    }

    #[test]
    fn split_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kg = build_graph(&numbered(40));
        let s = prepare_splits(&kg, [0.8, 0.1, 0.1], 1, AugmentOrder::default()).unwrap();
        write_split_dir(dir.path(), &s).unwrap();
        let (back, indexed) = read_split_dir(dir.path()).unwrap();
        assert_eq!(back, s);
        assert_eq!(indexed.train.len(), 64);
        let entities = fs::read_to_string(dir.path().join(ENTITIES_FILE)).unwrap();
        assert!(entities.starts_with("0\te0\n1\te1\n2\te10\n"));

        fs::write(dir.path().join(ENTITIES_FILE), "0\tzzz\n").unwrap();
        assert!(matches!(read_split_dir(dir.path()), Err(Error::IndexMismatch { .. })));
    }

    proptest! {
        #[test]
        fn augmentation_exactly_doubles(n in 0usize..300) {
            let base = build_graph(&numbered(n));
            let aug = base.augment_reverse().unwrap();
            prop_assert_eq!(aug.len(), 2 * base.len());
            prop_assert_eq!(aug.relations.len(), 2 * base.relations.len());
        }

        #[test]
        fn splits_partition_the_base(n in 0usize..200, seed in 0u64..50) {
            let kg = build_graph(&numbered(n));
            let s = split_triples(&kg, [0.8, 0.1, 0.1], seed).unwrap();
            let mut all: Vec<Triple> = s.iter_all().cloned().collect();
            all.sort();
            prop_assert_eq!(all, kg.named_triples());
            for (got, r) in [(s.train.len(), 0.8), (s.valid.len(), 0.1), (s.test.len(), 0.1)] {
                prop_assert!((got as f64 - r * n as f64).abs() <= 1.0);
            }
        }
    }
}
