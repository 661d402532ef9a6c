use crate::labeling::{is_version_shaped, Token};

use super::Stage;

pub const PAD: &str = "<pad>";

/// Every feature key the extractor can emit, by namespace. Keep this table
/// and [`extract_features`] in sync; a unit test checks emitted prefixes.
pub const FEATURE_TEMPLATES: &[(&str, &str)] = &[
    ("bias", "constant, lets each label learn a prior"),
    ("w0=", "current token, lowercased"),
    ("suf3=", "last three characters of the lowercased token"),
    ("pre1=", "first character of the token"),
    ("shape=cap", "token starts with an uppercase letter"),
    ("shape=digit", "token contains a digit"),
    ("shape=version", "token matches the version pattern and contains a dot"),
    ("w-1=", "previous token, lowercased"),
    ("w-2=", "token two to the left, lowercased"),
    ("w+1=", "next token, lowercased"),
    ("w+2=", "token two to the right, lowercased"),
    ("prev1=", "label predicted for the previous token"),
    ("prev2=", "label predicted two tokens back"),
    ("prev1+w0=", "previous predicted label joined with the current token"),
    ("BOS", "first token of the description"),
    ("EOS", "last token of the description"),
    ("iob0=", "domain stage only: IOB label of the current token"),
    ("iob-1=", "domain stage only: IOB label of the previous token"),
    ("iob+1=", "domain stage only: IOB label of the next token"),
];

/// Sorted, duplicate-free feature keys; every key has implicit weight 1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector(Vec<String>);

impl FeatureVector {
    fn from_keys(mut keys: Vec<String>) -> Self {
        keys.sort_unstable();
        keys.dedup();
        Self(keys)
    }

    pub fn keys(&self) -> &[String] {
        &self.0
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.binary_search_by(|k| k.as_str().cmp(key)).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Builds the feature vector for `tokens[index]`.
///
/// `prev_labels` holds the predictions for the previous and the one before
/// (use [`PAD`] at the sentence start). `iob_context` must be given exactly
/// when `stage` is [`Stage::Domain`].
///
/// Panics when `index` is out of range or the context does not match the stage.
pub fn extract_features(
    tokens: &[Token],
    index: usize,
    prev_labels: [&str; 2],
    stage: Stage,
    iob_context: Option<&[String]>,
) -> FeatureVector {
    assert!(
        index < tokens.len(),
        "feature index {index} out of range for {} tokens",
        tokens.len()
    );
    assert_eq!(
        iob_context.is_some(),
        stage == Stage::Domain,
        "IOB context is required for, and only for, the domain stage"
    );

    let word = &tokens[index].text;
    let lower = word.to_lowercase();
    let neighbor = |offset: isize| -> String {
        let j = index as isize + offset;
        if j < 0 || j as usize >= tokens.len() {
            PAD.to_string()
        } else {
            tokens[j as usize].text.to_lowercase()
        }
    };

    let chars: Vec<char> = lower.chars().collect();
    let suffix: String = chars[chars.len().saturating_sub(3)..].iter().collect();
    let first = word.chars().next().unwrap_or(' ');

    let mut keys = vec![
        "bias".to_string(),
        format!("w0={lower}"),
        format!("suf3={suffix}"),
        format!("pre1={first}"),
        format!("w-1={}", neighbor(-1)),
        format!("w-2={}", neighbor(-2)),
        format!("w+1={}", neighbor(1)),
        format!("w+2={}", neighbor(2)),
        format!("prev1={}", prev_labels[0]),
        format!("prev2={}", prev_labels[1]),
        format!("prev1+w0={}|{lower}", prev_labels[0]),
    ];
    if first.is_uppercase() {
        keys.push("shape=cap".into());
    }
    if word.chars().any(|c| c.is_ascii_digit()) {
        keys.push("shape=digit".into());
    }
    if word.contains('.') && is_version_shaped(word) {
        keys.push("shape=version".into());
    }
    if index == 0 {
        keys.push("BOS".into());
    }
    if index + 1 == tokens.len() {
        keys.push("EOS".into());
    }
    if let Some(iob) = iob_context {
        let at = |offset: isize| -> &str {
            let j = index as isize + offset;
            if j < 0 || j as usize >= iob.len() {
                PAD
            } else {
                &iob[j as usize]
            }
        };
        keys.push(format!("iob0={}", at(0)));
        keys.push(format!("iob-1={}", at(-1)));
        keys.push(format!("iob+1={}", at(1)));
    }
    FeatureVector::from_keys(keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::tokenize;

    #[test]
    fn version_after_cue() {
        let toks = tokenize("fixed before 2.5");
        let f = extract_features(&toks, 2, ["O", "O"], Stage::Iob, None);
        assert!(f.contains("shape=version"));
        assert!(f.contains("w-1=before"));
        assert!(f.contains("w-2=fixed"));
        assert!(f.contains("w+1=<pad>"));
        assert!(f.contains("EOS"));
        assert!(f.contains("suf3=2.5"));
    }

    #[test]
    fn first_token_padding() {
        let toks = tokenize("Apache Tomcat");
        let f = extract_features(&toks, 0, [PAD, PAD], Stage::Iob, None);
        assert!(f.contains("BOS"));
        assert!(f.contains("prev2=<pad>"));
        assert!(f.contains("shape=cap"));
        assert!(f.contains("pre1=A"));
        assert!(!f.contains("EOS"));
    }

    #[test]
    fn domain_stage_copies_iob_context() {
        let toks = tokenize("Limesurvey allows xss");
        let iob: Vec<String> = ["B", "O", "O"].iter().map(|s| s.to_string()).collect();
        let f = extract_features(&toks, 0, [PAD, PAD], Stage::Domain, Some(&iob));
        assert!(f.contains("iob0=B"));
        assert!(f.contains("iob+1=O"));
        assert!(f.contains("iob-1=<pad>"));
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn index_out_of_range_panics() {
        extract_features(&tokenize("a b"), 2, [PAD, PAD], Stage::Iob, None);
    }

    #[test]
    #[should_panic(expected = "IOB context")]
    fn domain_stage_requires_context() {
        extract_features(&tokenize("a b"), 0, [PAD, PAD], Stage::Domain, None);
    }

    #[test]
    fn keys_are_namespaced_and_unique() {
        let toks = tokenize("Red Hat JBoss 7.1.2 allows remote attackers to do it.");
        let iob: Vec<String> = toks.iter().map(|_| "O".to_string()).collect();
        for i in 0..toks.len() {
            for (stage, ctx) in [(Stage::Iob, None), (Stage::Domain, Some(iob.as_slice()))] {
                let f = extract_features(&toks, i, ["B", "I"], stage, ctx);
                let mut seen = std::collections::HashSet::new();
                for key in f.keys() {
                    assert!(seen.insert(key.clone()), "duplicate {key}");
                    assert!(
                        FEATURE_TEMPLATES.iter().any(|(p, _)| key.starts_with(p)),
                        "{key} has no template"
                    );
                }
            }
        }
    }
}
