//! Entity assembly and ontology-guided relation extraction.
//!
//! Graph node names are namespaced by type (`vendor:red hat`,
//! `cve:CVE-2022-0001`) so identical surfaces of different types never merge,
//! while identical products across CVEs do.

mod sampling;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use sampling::{
    read_review_sheet, sample_for_validation, score_review_sheet, write_review_sheet, ReviewRow,
    ReviewScore, Verdict,
};

use crate::error::{Error, Result};
use crate::labeling::{Domain, Iob, LabeledToken};

pub const REVERSE_SUFFIX: &str = "_reverse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityType {
    Vendor,
    Product,
    Version,
    RelevantTerm,
    Cve,
    Cwe,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::Vendor,
        EntityType::Product,
        EntityType::Version,
        EntityType::RelevantTerm,
        EntityType::Cve,
        EntityType::Cwe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Vendor => "VENDOR",
            EntityType::Product => "PRODUCT",
            EntityType::Version => "VERSION",
            EntityType::RelevantTerm => "RELEVANT_TERM",
            EntityType::Cve => "CVE",
            EntityType::Cwe => "CWE",
        }
    }

    /// Node-name namespace.
    pub fn prefix(self) -> &'static str {
        match self {
            EntityType::Vendor => "vendor",
            EntityType::Product => "product",
            EntityType::Version => "version",
            EntityType::RelevantTerm => "term",
            EntityType::Cve => "cve",
            EntityType::Cwe => "cwe",
        }
    }

    pub fn from_domain(domain: Domain) -> Option<Self> {
        match domain {
            Domain::Vendor => Some(EntityType::Vendor),
            Domain::Product => Some(EntityType::Product),
            Domain::Version => Some(EntityType::Version),
            Domain::RelevantTerm => Some(EntityType::RelevantTerm),
            Domain::None => None,
        }
    }

    /// Type of a namespaced node name.
    pub fn of_node(node: &str) -> Option<Self> {
        let (prefix, _) = node.split_once(':')?;
        Self::ALL.into_iter().find(|t| t.prefix() == prefix)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "entity type",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    /// Token texts joined by single spaces; lowercased for text-derived spans.
    pub surface: String,
    pub domain: EntityType,
    pub cve_id: String,
    /// Index of the first token; metadata spans (CVE, CWE) use 0.
    pub position: usize,
}

impl EntitySpan {
    pub fn node(&self) -> String {
        node_name(self.domain, &self.surface)
    }
}

pub fn node_name(kind: EntityType, surface: &str) -> String {
    format!("{}:{}", kind.prefix(), surface)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    pub fn reversed(&self) -> Triple {
        Triple::new(
            self.tail.clone(),
            format!("{}{REVERSE_SUFFIX}", self.relation),
            self.head.clone(),
        )
    }
}

/// Typed edge set: which relation, if any, links a head type to a tail type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    edges: BTreeMap<(EntityType, EntityType), String>,
}

impl Default for Ontology {
    fn default() -> Self {
        use EntityType::*;
        Self::from_edges([
            (Vendor, "has_product", Product),
            (Product, "has_version", Version),
            (Cve, "has_weakness", Cwe),
            (Cve, "has_vendor", Vendor),
            (Cve, "affects_product", Product),
            (Cve, "affects_version", Version),
            (RelevantTerm, "describes", Cve),
        ])
        .expect("default ontology is consistent")
    }
}

impl Ontology {
    /// Builds an ontology; a second relation for the same type pair is an error.
    pub fn from_edges<'a>(
        edges: impl IntoIterator<Item = (EntityType, &'a str, EntityType)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (head, relation, tail) in edges {
            if relation.is_empty() || relation.ends_with(REVERSE_SUFFIX) {
                return Err(Error::Config(format!("invalid relation name `{relation}`")));
            }
            if let Some(existing) = map.insert((head, tail), relation.to_string()) {
                if existing != relation {
                    return Err(Error::Config(format!(
                        "{head}->{tail} has two relations: `{existing}` and `{relation}`"
                    )));
                }
            }
        }
        Ok(Self { edges: map })
    }

    pub fn relation(&self, head: EntityType, tail: EntityType) -> Option<&str> {
        self.edges.get(&(head, tail)).map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = (EntityType, &str, EntityType)> {
        self.edges.iter().map(|((h, t), r)| (*h, r.as_str(), *t))
    }

    /// Head and tail types of a relation, including `_reverse` forms.
    pub fn signature(&self, relation: &str) -> Option<(EntityType, EntityType)> {
        let (base, reversed) = match relation.strip_suffix(REVERSE_SUFFIX) {
            Some(base) => (base, true),
            None => (relation, false),
        };
        let (h, t) = self
            .edges
            .iter()
            .find(|(_, r)| r.as_str() == base)
            .map(|(k, _)| *k)?;
        Some(if reversed { (t, h) } else { (h, t) })
    }

    /// True when the triple's node types match an ontology edge for its relation.
    pub fn admits(&self, triple: &Triple) -> bool {
        let (Some(h), Some(t)) = (
            EntityType::of_node(&triple.head),
            EntityType::of_node(&triple.tail),
        ) else {
            return false;
        };
        self.signature(&triple.relation) == Some((h, t))
    }
}

/// Groups tagged tokens into entity spans and adds the record's CVE and CWE
/// spans.
///
/// Panics if the labels are not IOB well-formed.
pub fn assemble_entities(
    labeled: &[LabeledToken],
    cve_id: &str,
    cwe_ids: &[String],
) -> Vec<EntitySpan> {
    assert!(
        crate::labeling::is_well_formed(labeled),
        "assemble_entities needs well-formed IOB labels"
    );
    let mut spans = vec![EntitySpan {
        surface: cve_id.to_string(),
        domain: EntityType::Cve,
        cve_id: cve_id.to_string(),
        position: 0,
    }];
    let mut current: Option<(usize, EntityType, Vec<&str>)> = None;
    let flush = |current: &mut Option<(usize, EntityType, Vec<&str>)>, spans: &mut Vec<EntitySpan>| {
        if let Some((position, domain, words)) = current.take() {
            spans.push(EntitySpan {
                surface: words.join(" ").to_lowercase(),
                domain,
                cve_id: cve_id.to_string(),
                position,
            });
        }
    };
    for (i, lt) in labeled.iter().enumerate() {
        match lt.iob {
            Iob::O => flush(&mut current, &mut spans),
            Iob::B => {
                flush(&mut current, &mut spans);
                let domain = EntityType::from_domain(lt.domain).expect("B token has a domain");
                current = Some((i, domain, vec![lt.token.text.as_str()]));
            }
            Iob::I => {
                if let Some((_, _, words)) = current.as_mut() {
                    words.push(lt.token.text.as_str());
                }
            }
        }
    }
    flush(&mut current, &mut spans);
    for cwe in cwe_ids {
        spans.push(EntitySpan {
            surface: cwe.clone(),
            domain: EntityType::Cwe,
            cve_id: cve_id.to_string(),
            position: 0,
        });
    }
    spans
}

/// Creates typed triples for one record's spans. Output is sorted and
/// duplicate-free.
///
/// - each product links from the nearest preceding vendor, each version from
///   the nearest preceding product;
/// - the CVE links to every vendor, product and version;
/// - each relevant term describes the CVE;
/// - the CVE links to each CWE.
///
/// A pair is only emitted when the ontology has an edge for its types.
pub fn extract_triples(spans: &[EntitySpan], ontology: &Ontology) -> Vec<Triple> {
    let mut out = BTreeSet::new();
    let mut emit = |head: &EntitySpan, tail: &EntitySpan| {
        if let Some(rel) = ontology.relation(head.domain, tail.domain) {
            out.insert(Triple::new(head.node(), rel, tail.node()));
        }
    };

    let nearest_before = |kind: EntityType, position: usize| {
        spans
            .iter()
            .filter(|s| s.domain == kind && s.position < position)
            .max_by(|a, b| a.position.cmp(&b.position).then_with(|| b.surface.cmp(&a.surface)))
    };
    for span in spans {
        let anchor = match span.domain {
            EntityType::Product => nearest_before(EntityType::Vendor, span.position),
            EntityType::Version => nearest_before(EntityType::Product, span.position),
            _ => None,
        };
        if let Some(anchor) = anchor {
            emit(anchor, span);
        }
    }

    for cve in spans.iter().filter(|s| s.domain == EntityType::Cve) {
        for span in spans {
            match span.domain {
                EntityType::Vendor | EntityType::Product | EntityType::Version | EntityType::Cwe => {
                    emit(cve, span)
                }
                EntityType::RelevantTerm => emit(span, cve),
                EntityType::Cve => {}
            }
        }
    }
    out.into_iter().collect()
}

pub fn write_triples<W: Write>(mut out: W, triples: &[Triple]) -> Result<()> {
    for t in triples {
        writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
    }
    Ok(())
}

pub fn read_triples<R: Read>(input: R) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        match cols[..] {
            [h, r, t] if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                triples.push(Triple::new(h, r, t))
            }
            _ => return Err(Error::format(i + 1, "expected head<TAB>relation<TAB>tail")),
        }
    }
    Ok(triples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::Token;
    use proptest::prelude::*;

    fn span(surface: &str, domain: EntityType, position: usize) -> EntitySpan {
        EntitySpan {
            surface: surface.into(),
            domain,
            cve_id: "CVE-2022-0001".into(),
            position,
        }
    }

    fn lts(words: &[(&str, Iob, Domain)]) -> Vec<LabeledToken> {
        words
            .iter()
            .enumerate()
            .map(|(i, (w, iob, d))| LabeledToken {
                token: Token::new(*w, i, i + 1),
                iob: *iob,
                domain: *d,
            })
            .collect()
    }

    #[test]
    fn multiword_relevant_term() {
        let labeled = lts(&[
            ("execute", Iob::B, Domain::RelevantTerm),
            ("arbitrary", Iob::I, Domain::RelevantTerm),
            ("code", Iob::I, Domain::RelevantTerm),
        ]);
        let spans = assemble_entities(&labeled, "CVE-2022-0001", &[]);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[1].surface, "execute arbitrary code");
        assert_eq!(spans[1].domain, EntityType::RelevantTerm);
        assert_eq!(spans[1].node(), "term:execute arbitrary code");
    }

    #[test]
    fn all_outside_gives_cve_and_cwe_only() {
        let labeled = lts(&[("nothing", Iob::O, Domain::None), ("here", Iob::O, Domain::None)]);
        let spans = assemble_entities(&labeled, "CVE-2022-0001", &["CWE-79".into()]);
        let kinds: Vec<_> = spans.iter().map(|s| (s.domain, s.surface.as_str())).collect();
        assert_eq!(kinds, [(EntityType::Cve, "CVE-2022-0001"), (EntityType::Cwe, "CWE-79")]);
    }

    #[test]
    fn consecutive_b_tokens_split() {
        let labeled = lts(&[("Foo", Iob::B, Domain::Product), ("Bar", Iob::B, Domain::Product)]);
        let spans = assemble_entities(&labeled, "CVE-2022-0001", &[]);
        let surfaces: Vec<_> = spans[1..].iter().map(|s| (s.surface.as_str(), s.position)).collect();
        assert_eq!(surfaces, [("foo", 0), ("bar", 1)]);
    }

    #[test]
    #[should_panic(expected = "well-formed")]
    fn malformed_iob_panics() {
        let labeled = lts(&[("x", Iob::I, Domain::Product)]);
        assert_entities_panics(&labeled);
    }

    fn assert_entities_panics(labeled: &[LabeledToken]) {
        assemble_entities(labeled, "CVE-2022-0001", &[]);
    }

    #[test]
    fn vendor_product_version_golden() {
        let spans = vec![
            span("CVE-X", EntityType::Cve, 0),
            span("v", EntityType::Vendor, 0),
            span("p", EntityType::Product, 1),
            span("ver", EntityType::Version, 2),
            span("CWE-79", EntityType::Cwe, 0),
        ];
        let got: BTreeSet<Triple> = extract_triples(&spans, &Ontology::default()).into_iter().collect();
        let want: BTreeSet<Triple> = [
            ("vendor:v", "has_product", "product:p"),
            ("product:p", "has_version", "version:ver"),
            ("cve:CVE-X", "has_vendor", "vendor:v"),
            ("cve:CVE-X", "affects_product", "product:p"),
            ("cve:CVE-X", "affects_version", "version:ver"),
            ("cve:CVE-X", "has_weakness", "cwe:CWE-79"),
        ]
        .into_iter()
        .map(|(h, r, t)| Triple::new(h, r, t))
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn cve_alone_yields_nothing() {
        let spans = vec![span("CVE-X", EntityType::Cve, 0)];
        assert!(extract_triples(&spans, &Ontology::default()).is_empty());
    }

    #[test]
    fn version_without_product() {
        let spans = vec![
            span("CVE-X", EntityType::Cve, 0),
            span("1.0", EntityType::Version, 3),
            span("p", EntityType::Product, 5),
        ];
        let triples = extract_triples(&spans, &Ontology::default());
        assert!(!triples.iter().any(|t| t.relation == "has_version"));
        assert!(triples.contains(&Triple::new("cve:CVE-X", "affects_version", "version:1.0")));
    }

    #[test]
    fn nearest_preceding_anchor() {
        let spans = vec![
            span("CVE-X", EntityType::Cve, 0),
            span("a", EntityType::Vendor, 0),
            span("b", EntityType::Vendor, 2),
            span("p", EntityType::Product, 4),
            span("q", EntityType::Product, 6),
            span("1", EntityType::Version, 7),
            span("term", EntityType::RelevantTerm, 9),
        ];
        let triples = extract_triples(&spans, &Ontology::default());
        assert!(triples.contains(&Triple::new("vendor:b", "has_product", "product:p")));
        assert!(triples.contains(&Triple::new("vendor:b", "has_product", "product:q")));
        assert!(!triples.iter().any(|t| t.head == "vendor:a" && t.relation == "has_product"));
        assert!(triples.contains(&Triple::new("product:q", "has_version", "version:1")));
        assert!(triples.contains(&Triple::new("term:term", "describes", "cve:CVE-X")));
    }

    #[test]
    fn ontology_override_drops_edges() {
        use EntityType::*;
        let ontology = Ontology::from_edges([(Cve, "has_weakness", Cwe)]).unwrap();
        let spans = vec![
            span("CVE-X", Cve, 0),
            span("v", Vendor, 0),
            span("p", Product, 1),
            span("CWE-1", Cwe, 0),
        ];
        assert_eq!(
            extract_triples(&spans, &ontology),
            vec![Triple::new("cve:CVE-X", "has_weakness", "cwe:CWE-1")]
        );
        assert!(Ontology::from_edges([(Cve, "a", Cwe), (Cve, "b", Cwe)]).is_err());
    }

    #[test]
    fn signatures_include_reverses() {
        let o = Ontology::default();
        assert_eq!(o.signature("has_weakness"), Some((EntityType::Cve, EntityType::Cwe)));
        assert_eq!(
            o.signature("has_weakness_reverse"),
            Some((EntityType::Cwe, EntityType::Cve))
        );
        assert_eq!(o.signature("nope"), None);
    }

    #[test]
    fn triple_tsv_round_trip() {
        let triples = vec![Triple::new("vendor:red hat", "has_product", "product:jboss")];
        let mut buf = Vec::new();
        write_triples(&mut buf, &triples).unwrap();
        assert_eq!(buf, b"vendor:red hat\thas_product\tproduct:jboss\n");
        assert_eq!(read_triples(buf.as_slice()).unwrap(), triples);
        assert!(read_triples("a\tb\n".as_bytes()).is_err());
    }

    pub(crate) fn arb_spans() -> impl Strategy<Value = Vec<EntitySpan>> {
        let kinds = prop::sample::select(vec![
            EntityType::Vendor,
            EntityType::Product,
            EntityType::Version,
            EntityType::RelevantTerm,
            EntityType::Cwe,
        ]);
        prop::collection::vec((kinds, "[a-c]{1,2}", 0usize..12), 0..12).prop_map(|items| {
            let mut spans = vec![span("CVE-X", EntityType::Cve, 0)];
            spans.extend(items.into_iter().map(|(k, s, p)| span(&s, k, p)));
            spans
        })
    }

    proptest! {
        #[test]
        fn every_triple_is_an_ontology_edge(spans in arb_spans()) {
            let ontology = Ontology::default();
            for t in extract_triples(&spans, &ontology) {
                prop_assert!(ontology.admits(&t), "{t:?}");
            }
        }

        #[test]
        fn shuffling_spans_does_not_change_output(spans in arb_spans(), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let ontology = Ontology::default();
            let mut shuffled = spans.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = extract_triples(&spans, &ontology);
            prop_assert_eq!(&a, &extract_triples(&shuffled, &ontology));
            let unique: BTreeSet<_> = a.iter().collect();
            prop_assert_eq!(unique.len(), a.len());
        }

        #[test]
        fn removing_a_span_only_reanchors_chains(spans in arb_spans(), drop in 0usize..12) {
            // The only triples that can appear are vendor->product or
            // product->version links whose previous nearest anchor was the
            // removed span.
            let ontology = Ontology::default();
            let full: BTreeSet<Triple> = extract_triples(&spans, &ontology).into_iter().collect();
            let mut fewer = spans.clone();
            let removed = (drop < fewer.len()).then(|| fewer.remove(drop));
            for t in extract_triples(&fewer, &ontology) {
                if full.contains(&t) {
                    continue;
                }
                let removed = removed.as_ref().expect("nothing removed, nothing may change");
                prop_assert!(t.relation == "has_product" || t.relation == "has_version", "{t:?}");
                let anchored_by_removed = full.contains(&Triple::new(removed.node(), t.relation.clone(), t.tail.clone()));
                prop_assert!(anchored_by_removed, "{t:?} appeared after removing {removed:?}");
            }
        }

        #[test]
        fn removing_a_non_anchor_span_never_adds_triples(spans in arb_spans(), drop in 0usize..12) {
            let ontology = Ontology::default();
            let full: BTreeSet<Triple> = extract_triples(&spans, &ontology).into_iter().collect();
            let mut fewer = spans.clone();
            if drop < fewer.len() && !matches!(fewer[drop].domain, EntityType::Vendor | EntityType::Product) {
                fewer.remove(drop);
            }
            for t in extract_triples(&fewer, &ontology) {
                prop_assert!(full.contains(&t), "{t:?} appeared after removal");
            }
        }
    }
}
