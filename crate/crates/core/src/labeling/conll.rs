//! CoNLL-style corpus files: `token<TAB>IOB<TAB>DOMAIN`, one token per line,
//! a blank line after each description. An optional `# id = CVE-...` line
//! (no tabs) may precede a description.

use std::io::{BufRead, BufReader, Read, Write};

use super::{Domain, Iob, LabeledToken, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub id: Option<String>,
    pub tokens: Vec<LabeledToken>,
}

impl LabeledSentence {
    pub fn words(&self) -> Vec<Token> {
        self.tokens.iter().map(|t| t.token.clone()).collect()
    }
}

pub fn write_conll<W: Write>(mut out: W, sentences: &[LabeledSentence]) -> Result<()> {
    for sentence in sentences {
        if let Some(id) = &sentence.id {
            writeln!(out, "# id = {id}")?;
        }
        for lt in &sentence.tokens {
            writeln!(out, "{}\t{}\t{}", lt.token.text, lt.iob, lt.domain)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a corpus back. Offsets are rebuilt as if tokens were joined by
/// single spaces; the original character offsets are not stored.
pub fn read_conll<R: Read>(input: R) -> Result<Vec<LabeledSentence>> {
    let mut sentences = Vec::new();
    let mut current = LabeledSentence {
        id: None,
        tokens: Vec::new(),
    };
    let mut offset = 0;
    let flush = |current: &mut LabeledSentence, sentences: &mut Vec<LabeledSentence>| {
        if current.id.is_some() || !current.tokens.is_empty() {
            sentences.push(std::mem::replace(
                current,
                LabeledSentence {
                    id: None,
                    tokens: Vec::new(),
                },
            ));
        }
    };
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.is_empty() {
            flush(&mut current, &mut sentences);
            offset = 0;
            continue;
        }
        if !line.contains('\t') {
            if let Some(id) = line.strip_prefix("# id = ") {
                current.id = Some(id.trim().to_string());
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            return Err(Error::format(lineno, "expected token<TAB>IOB<TAB>DOMAIN"));
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [text, iob, domain] = cols[..] else {
            return Err(Error::format(lineno, format!("expected 3 columns, got {}", cols.len())));
        };
        let iob: Iob = iob
            .parse()
            .map_err(|_| Error::format(lineno, format!("unknown IOB tag `{iob}`")))?;
        let domain: Domain = domain
            .parse()
            .map_err(|_| Error::format(lineno, format!("unknown domain `{domain}`")))?;
        let len = text.chars().count();
        current.tokens.push(LabeledToken {
            token: Token::new(text, offset, offset + len),
            iob,
            domain,
        });
        offset += len + 1;
    }
    flush(&mut current, &mut sentences);
    Ok(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_expected_layout_and_reads_back() {
        let sentence = LabeledSentence {
            id: Some("CVE-2022-0001".into()),
            tokens: vec![
                LabeledToken {
                    token: Token::new("Limesurvey", 0, 10),
                    iob: Iob::B,
                    domain: Domain::Product,
                },
                LabeledToken::outside(Token::new("allows", 11, 17)),
            ],
        };
        let mut buf = Vec::new();
        write_conll(&mut buf, &[sentence.clone(), sentence.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# id = CVE-2022-0001\nLimesurvey\tB\tPRODUCT\nallows\tO\tNONE\n\n"));
        let back = read_conll(buf.as_slice()).unwrap();
        assert_eq!(back, vec![sentence.clone(), sentence]);
    }

    #[test]
    fn hash_token_is_not_a_comment() {
        let back = read_conll("#\tO\tNONE\n\n".as_bytes()).unwrap();
        assert_eq!(back[0].tokens[0].token.text, "#");
    }

    #[test]
    fn bad_lines_name_the_line() {
        let err = read_conll("a\tO\tNONE\nb\tX\tNONE\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 2"), "{err}");
        assert!(read_conll("a\tO\n".as_bytes()).is_err());
    }
}
