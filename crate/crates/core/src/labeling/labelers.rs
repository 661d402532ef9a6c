use serde::{Deserialize, Serialize};

use super::gazetteer::Gazetteer;
use super::tokenize::{is_version_shaped, tokenize, Token};
use super::{Domain, Iob, LabeledToken};
use crate::nvd::{CpeEntry, CveRecord};

/// Words that, next to a version-shaped token, mark it as a version mention
/// ("before 2.5", "2.5 and earlier", "versions 1.0 through 1.4").
pub const DEFAULT_CUE_WORDS: [&str; 10] = [
    "before", "after", "through", "prior", "to", "earlier", "and", "up", "versions", "version",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Cpe,
    Gazetteer,
    Regex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    pub cue_words: Vec<String>,
    /// Version-shaped tokens with at least this many dots are labeled even
    /// without a cue word.
    pub unconditional_min_dots: usize,
    /// Highest priority first. A token claimed by an earlier source is never
    /// relabeled by a later one.
    pub priority: Vec<LabelSource>,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            cue_words: DEFAULT_CUE_WORDS.iter().map(|s| s.to_string()).collect(),
            unconditional_min_dots: 2,
            priority: vec![LabelSource::Cpe, LabelSource::Gazetteer, LabelSource::Regex],
        }
    }
}

/// A labeled span `[start, start + len)` over a token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    start: usize,
    len: usize,
    domain: Domain,
}

fn spans_to_labels(tokens: &[Token], spans: &[Span]) -> Vec<LabeledToken> {
    let mut out: Vec<LabeledToken> = tokens.iter().cloned().map(LabeledToken::outside).collect();
    for span in spans {
        for (k, lt) in out[span.start..span.start + span.len].iter_mut().enumerate() {
            lt.iob = if k == 0 { Iob::B } else { Iob::I };
            lt.domain = span.domain;
        }
    }
    out
}

/// Greedy left-to-right scan: at each position take the longest candidate
/// phrase that matches; among equal lengths the earlier candidate in
/// `candidates` wins. Matched tokens are skipped, so spans never overlap.
fn greedy_match(lowered: &[String], candidates: &[(Vec<String>, Domain)]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < lowered.len() {
        let mut best: Option<(usize, Domain)> = None;
        for (phrase, domain) in candidates {
            let len = phrase.len();
            if len == 0 || i + len > lowered.len() || best.is_some_and(|(l, _)| l >= len) {
                continue;
            }
            if lowered[i..i + len] == phrase[..] {
                best = Some((len, *domain));
            }
        }
        match best {
            Some((len, domain)) => {
                spans.push(Span {
                    start: i,
                    len,
                    domain,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}

fn lowered(tokens: &[Token]) -> Vec<String> {
    tokens.iter().map(Token::lower).collect()
}

/// CPE fields as token phrases: underscores become spaces, then the usual
/// tokenizer and lowercasing apply.
fn cpe_phrase(field: &str) -> Vec<String> {
    tokenize(&field.replace('_', " "))
        .iter()
        .map(Token::lower)
        .collect()
}

fn cpe_candidates(cpes: &[CpeEntry]) -> Vec<(Vec<String>, Domain)> {
    // Equal-length ties resolve product > vendor > version, so a vendor that
    // shares its product's name ("limesurvey:limesurvey") labels PRODUCT.
    let mut candidates: Vec<(Vec<String>, Domain)> = Vec::new();
    let mut push = |phrase: Vec<String>, domain| {
        if !phrase.is_empty() && !candidates.iter().any(|(p, d)| *p == phrase && *d == domain) {
            candidates.push((phrase, domain));
        }
    };
    for cpe in cpes {
        push(cpe_phrase(&cpe.product), Domain::Product);
    }
    for cpe in cpes {
        push(cpe_phrase(&cpe.vendor), Domain::Vendor);
    }
    for cpe in cpes.iter().filter(|c| c.has_concrete_version()) {
        push(
            tokenize(&cpe.version).iter().map(Token::lower).collect(),
            Domain::Version,
        );
    }
    candidates
}

fn cpe_spans(tokens: &[Token], cpes: &[CpeEntry]) -> Vec<Span> {
    greedy_match(&lowered(tokens), &cpe_candidates(cpes))
}

/// Labels vendor, product and exact-version mentions found in the record's
/// own CPE entries.
pub fn label_with_cpe(tokens: &[Token], cpes: &[CpeEntry]) -> Vec<LabeledToken> {
    spans_to_labels(tokens, &cpe_spans(tokens, cpes))
}

fn gazetteer_spans(tokens: &[Token], gaz: &Gazetteer) -> Vec<Span> {
    let lowered = lowered(tokens);
    let mut spans = Vec::new();
    let mut i = 0;
    while i < lowered.len() {
        let max = gaz.max_phrase_len().min(lowered.len() - i);
        let hit = (1..=max).rev().find(|&len| gaz.contains(&lowered[i..i + len]));
        match hit {
            Some(len) => {
                spans.push(Span {
                    start: i,
                    len,
                    domain: Domain::RelevantTerm,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}

pub fn label_with_gazetteer(tokens: &[Token], gaz: &Gazetteer) -> Vec<LabeledToken> {
    spans_to_labels(tokens, &gazetteer_spans(tokens, gaz))
}

fn regex_spans(tokens: &[Token], config: &LabelingConfig) -> Vec<Span> {
    let lowered = lowered(tokens);
    let is_cue = |i: usize| {
        lowered
            .get(i)
            .is_some_and(|w| config.cue_words.iter().any(|c| c == w))
    };
    let mut spans = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        let text = tok.text.as_str();
        if !is_version_shaped(text) {
            continue;
        }
        let dots = text.matches('.').count();
        if dots == 0 {
            continue;
        }
        let cued = (i > 0 && is_cue(i - 1)) || is_cue(i + 1);
        if cued || dots >= config.unconditional_min_dots {
            spans.push(Span {
                start: i,
                len: 1,
                domain: Domain::Version,
            });
        }
    }
    spans
}

/// Version phrases by rule, using the default cue words.
pub fn label_with_regex(tokens: &[Token]) -> Vec<LabeledToken> {
    label_with_regex_config(tokens, &LabelingConfig::default())
}

pub fn label_with_regex_config(tokens: &[Token], config: &LabelingConfig) -> Vec<LabeledToken> {
    spans_to_labels(tokens, &regex_spans(tokens, config))
}

/// Tokenizes the description and merges the three labelers by priority.
pub fn label_record(record: &CveRecord, gaz: &Gazetteer) -> Vec<LabeledToken> {
    label_record_with(record, gaz, &LabelingConfig::default())
}

pub fn label_record_with(
    record: &CveRecord,
    gaz: &Gazetteer,
    config: &LabelingConfig,
) -> Vec<LabeledToken> {
    let tokens = tokenize(&record.description);
    let mut claimed = vec![false; tokens.len()];
    let mut accepted = Vec::new();
    for source in &config.priority {
        let spans = match source {
            LabelSource::Cpe => cpe_spans(&tokens, &record.cpes),
            LabelSource::Gazetteer => gazetteer_spans(&tokens, gaz),
            LabelSource::Regex => regex_spans(&tokens, config),
        };
        for span in spans {
            let range = span.start..span.start + span.len;
            // Whole spans only: a partially claimed span would leave a dangling I.
            if claimed[range.clone()].iter().any(|c| *c) {
                continue;
            }
            claimed[range].iter_mut().for_each(|c| *c = true);
            accepted.push(span);
        }
    }
    spans_to_labels(&tokens, &accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::is_well_formed;
    use crate::nvd::CpePart;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<Token> {
        tokenize(&words.join(" "))
    }

    fn tags(labels: &[LabeledToken]) -> Vec<String> {
        labels.iter().map(LabeledToken::tag).collect()
    }

    fn app(vendor: &str, product: &str, version: &str) -> CpeEntry {
        CpeEntry::new(CpePart::Application, vendor, product, version)
    }

    #[test]
    fn cpe_product_and_version() {
        let tokens = tokenize("Limesurvey 5.4.15");
        let labels = label_with_cpe(&tokens, &[app("limesurvey", "limesurvey", "5.4.15")]);
        assert_eq!(tags(&labels), ["B-PRODUCT", "B-VERSION"]);
    }

    #[test]
    fn cpe_without_entries_is_all_outside() {
        let labels = label_with_cpe(&toks(&["Limesurvey", "5.4.15"]), &[]);
        assert_eq!(tags(&labels), ["O", "O"]);
    }

    #[test]
    fn cpe_underscores_match_spaces() {
        let labels = label_with_cpe(&toks(&["Red", "Hat"]), &[app("red_hat", "jboss", "*")]);
        assert_eq!(tags(&labels), ["B-VENDOR", "I-VENDOR"]);
    }

    #[test]
    fn cpe_longest_match_wins() {
        let tokens = tokenize("Apache HTTP Server 2.4.49 and Apache Tomcat");
        let cpes = [app("apache", "http_server", "2.4.49"), app("apache", "http", "*")];
        assert_eq!(
            tags(&label_with_cpe(&tokens, &cpes)),
            ["B-VENDOR", "B-PRODUCT", "I-PRODUCT", "B-VERSION", "O", "B-VENDOR", "O"]
        );
    }

    #[test]
    fn wildcard_versions_never_label() {
        let tokens = tokenize("Foo - * 1.0");
        let labels = label_with_cpe(&tokens, &[app("x", "foo", "*"), app("x", "foo", "-")]);
        assert_eq!(tags(&labels), ["B-PRODUCT", "O", "O", "O"]);
    }

    #[test]
    fn regex_cued_version() {
        assert_eq!(tags(&label_with_regex(&toks(&["before", "2.5"]))), ["O", "B-VERSION"]);
        assert_eq!(
            tags(&label_with_regex(&toks(&["2.5", "and", "earlier"]))),
            ["B-VERSION", "O", "O"]
        );
        assert_eq!(tags(&label_with_regex(&toks(&["before", "3.x"]))), ["O", "B-VERSION"]);
    }

    #[test]
    fn regex_ignores_plain_integers() {
        assert_eq!(tags(&label_with_regex(&toks(&["port", "8080"]))), ["O", "O"]);
        assert_eq!(tags(&label_with_regex(&toks(&["before", "8080"]))), ["O", "O"]);
    }

    #[test]
    fn regex_two_dots_unconditional() {
        assert_eq!(tags(&label_with_regex(&toks(&["5.4.15"]))), ["B-VERSION"]);
        assert_eq!(tags(&label_with_regex(&toks(&["uses", "2.5"]))), ["O", "O"]);
    }

    #[test]
    fn regex_config_override() {
        let config = LabelingConfig {
            cue_words: vec!["v".into()],
            unconditional_min_dots: 99,
            ..LabelingConfig::default()
        };
        let labels = label_with_regex_config(&toks(&["before", "5.4.15", "and", "v", "1.2"]), &config);
        assert_eq!(tags(&labels), ["O", "O", "O", "O", "B-VERSION"]);
    }

    #[test]
    fn gazetteer_phrase() {
        let gaz = Gazetteer::parse("execute arbitrary code");
        let labels = label_with_gazetteer(&toks(&["execute", "arbitrary", "code"]), &gaz);
        assert_eq!(
            tags(&labels),
            ["B-RELEVANT_TERM", "I-RELEVANT_TERM", "I-RELEVANT_TERM"]
        );
    }

    #[test]
    fn empty_gazetteer() {
        let labels = label_with_gazetteer(&toks(&["execute", "code"]), &Gazetteer::default());
        assert_eq!(tags(&labels), ["O", "O"]);
    }

    #[test]
    fn gazetteer_longest_first() {
        let gaz = Gazetteer::parse("denial of\ndenial of service");
        let labels = label_with_gazetteer(&toks(&["Denial", "of", "service"]), &gaz);
        assert_eq!(
            tags(&labels),
            ["B-RELEVANT_TERM", "I-RELEVANT_TERM", "I-RELEVANT_TERM"]
        );
    }

    fn record(description: &str, cpes: Vec<CpeEntry>) -> CveRecord {
        CveRecord {
            cve_id: "CVE-2022-0001".into(),
            description: description.into(),
            cwe_ids: vec![],
            cpes,
            year: 2022,
        }
    }

    #[test]
    fn record_cpe_version_takes_priority() {
        let r = record("Foo before 2.5", vec![app("acme", "foo", "2.5")]);
        let labels = label_record(&r, &Gazetteer::starter());
        assert_eq!(tags(&labels), ["B-PRODUCT", "O", "B-VERSION"]);
    }

    #[test]
    fn record_empty_description() {
        let r = record("", vec![]);
        assert!(label_record(&r, &Gazetteer::starter()).is_empty());
    }

    #[test]
    fn record_merges_all_sources() {
        let r = record(
            "SQL injection in Acme Portal before 1.2 allows remote attackers to execute arbitrary code.",
            vec![app("acme", "portal", "*")],
        );
        let labels = label_record(&r, &Gazetteer::starter());
        assert_eq!(
            tags(&labels),
            [
                "B-RELEVANT_TERM",
                "I-RELEVANT_TERM",
                "O",
                "B-VENDOR",
                "B-PRODUCT",
                "O",
                "B-VERSION",
                "O",
                "B-RELEVANT_TERM",
                "I-RELEVANT_TERM",
                "O",
                "B-RELEVANT_TERM",
                "I-RELEVANT_TERM",
                "I-RELEVANT_TERM",
                "O"
            ]
        );
    }

    #[test]
    fn cpe_claims_block_partial_gazetteer_spans() {
        // "code" is a product here, so "execute arbitrary code" must not half-apply.
        let r = record("execute arbitrary code", vec![app("ms", "code", "*")]);
        let gaz = Gazetteer::parse("execute arbitrary code\nexecute arbitrary");
        let labels = label_record(&r, &gaz);
        assert_eq!(tags(&labels), ["O", "O", "B-PRODUCT"]);
        assert!(is_well_formed(&labels));
    }

    fn arb_record() -> impl Strategy<Value = CveRecord> {
        let words = prop::sample::select(vec![
            "acme", "portal", "red", "hat", "before", "2.5", "1.2.3", "execute", "arbitrary",
            "code", "denial", "of", "service", "via", "and", "earlier", "sql", "injection",
            "the", "Foo", "bar", "x.y", "3.x", ".", ",",
        ]);
        let cpe = (
            prop::sample::select(vec!["acme", "red_hat", "foo", "code"]),
            prop::sample::select(vec!["portal", "foo_bar", "hat", "service", "denial_of"]),
            prop::sample::select(vec!["*", "-", "2.5", "1.2.3", "3.x"]),
        )
            .prop_map(|(v, p, ver)| app(v, p, ver));
        (prop::collection::vec(words, 0..25), prop::collection::vec(cpe, 0..4)).prop_map(
            |(words, cpes)| record(&words.join(" "), cpes),
        )
    }

    proptest! {
        #[test]
        fn label_record_is_well_formed(r in arb_record()) {
            let labels = label_record(&r, &Gazetteer::starter());
            prop_assert!(is_well_formed(&labels));
            prop_assert_eq!(labels.len(), tokenize(&r.description).len());
        }

        #[test]
        fn gazetteer_never_changes_cpe_labels(
            r in arb_record(),
            extra in prop::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,2}", 0..6),
        ) {
            let base = Gazetteer::parse("execute arbitrary code");
            let mut bigger = base.clone();
            for p in &extra {
                bigger.insert(p);
            }
            bigger.insert("acme portal");
            bigger.insert("red hat");
            let cpe_only = label_with_cpe(&tokenize(&r.description), &r.cpes);
            let before = label_record(&r, &base);
            let after = label_record(&r, &bigger);
            for ((c, b), a) in cpe_only.iter().zip(&before).zip(&after) {
                if c.iob != Iob::O {
                    prop_assert_eq!(b, c);
                    prop_assert_eq!(a, c);
                }
            }
        }

        #[test]
        fn labeling_is_deterministic(r in arb_record()) {
            let gaz = Gazetteer::starter();
            prop_assert_eq!(label_record(&r, &gaz), label_record(&r, &gaz));
        }
    }
}
