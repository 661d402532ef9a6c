//! Shared inputs for the benchmarks.

use vulnkg::kg::{build_graph, prepare_splits, AugmentOrder, IndexedSplits};
use vulnkg::labeling::{label_record, Gazetteer};
use vulnkg::relation::{assemble_entities, extract_triples};
use vulnkg::synth::{generate_records, SynthConfig};
use vulnkg::{CveRecord, LabeledToken, Ontology};

pub fn records(n: usize) -> Vec<CveRecord> {
    generate_records(&SynthConfig { records: n, ..SynthConfig::default() })
}

pub fn labeled(records: &[CveRecord]) -> Vec<Vec<LabeledToken>> {
    let gaz = Gazetteer::starter();
    records.iter().map(|r| label_record(r, &gaz)).collect()
}

/// Split and reverse-augmented graph extracted from `n` synthetic records.
pub fn graph(n: usize) -> IndexedSplits {
    let records = records(n);
    let ontology = Ontology::default();
    let triples: Vec<_> = records
        .iter()
        .zip(labeled(&records))
        .flat_map(|(r, l)| extract_triples(&assemble_entities(&l, &r.cve_id, &r.cwe_ids), &ontology))
        .collect();
    let splits = prepare_splits(&build_graph(&triples), [0.8, 0.1, 0.1], 1, AugmentOrder::SplitThenAugment)
        .expect("valid ratios");
    IndexedSplits::from_splits(&splits)
}
