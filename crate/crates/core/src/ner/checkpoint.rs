//! Plain-text perceptron checkpoints, fields separated by tabs:
//!
//! ```text
//! vulnkg-perceptron  1
//! stage  iob
//! labels  O  B  I
//! steps  1234
//! <feature>  <label>  <weight>
//! ```
//!
//! Weight lines are sorted by feature then label order, with nine decimals,
//! so two checkpoints of the same model diff cleanly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{PerceptronModel, Stage};
use crate::error::{Error, Result};

const MAGIC: &str = "vulnkg-perceptron\t1";

pub fn write_model<W: Write>(mut out: W, model: &PerceptronModel) -> Result<()> {
    if !model.is_finalized() {
        return Err(Error::Checkpoint("model must be finalized before saving".into()));
    }
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "stage\t{}", model.stage())?;
    writeln!(out, "labels\t{}", model.labels().join("\t"))?;
    writeln!(out, "steps\t{}", model.steps())?;
    let mut features: Vec<&String> = model.weights().keys().collect();
    features.sort();
    for feature in features {
        for (label, w) in model.labels().iter().zip(&model.weights()[feature]) {
            let formatted = format!("{w:.9}");
            if formatted.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
                continue;
            }
            writeln!(out, "{feature}\t{label}\t{formatted}")?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<PerceptronModel> {
    let mut lines = BufReader::new(input).lines();
    let mut header = |name: &str, lineno: usize| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing `{name}` line")))??;
        if name == "magic" {
            return Ok(line);
        }
        line.strip_prefix(&format!("{name}\t"))
            .map(str::to_string)
            .ok_or_else(|| Error::format(lineno, format!("expected `{name}` header")))
    };
    if header("magic", 1)? != MAGIC {
        return Err(Error::Checkpoint("not a perceptron checkpoint".into()));
    }
    let stage: Stage = header("stage", 2)?.parse()?;
    let labels: Vec<String> = header("labels", 3)?.split('\t').map(str::to_string).collect();
    let steps: u64 = header("steps", 4)?
        .parse()
        .map_err(|_| Error::format(4, "bad step count"))?;
    if labels != stage.labels() {
        return Err(Error::Checkpoint(format!(
            "label list {labels:?} does not match the {stage} stage"
        )));
    }

    let mut weights: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 5;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(feature), Some(label), Some(value), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(Error::format(lineno, "expected feature<TAB>label<TAB>weight"));
        };
        let l = labels
            .iter()
            .position(|x| x == label)
            .ok_or_else(|| Error::format(lineno, format!("unknown label `{label}`")))?;
        let w: f64 = value
            .parse()
            .map_err(|_| Error::format(lineno, format!("bad weight `{value}`")))?;
        weights
            .entry(feature.to_string())
            .or_insert_with(|| vec![0.0; labels.len()])[l] = w;
    }
    Ok(PerceptronModel::from_weights(stage, labels, weights, steps))
}

pub fn save_model(path: &Path, model: &PerceptronModel) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_model(&mut out, model)?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PerceptronModel> {
    read_model(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::tokenize;
    use crate::ner::{train_ap, TaggedSentence, TrainOptions};

    fn trained() -> PerceptronModel {
        let corpus = vec![
            TaggedSentence {
                tokens: tokenize("Apache Tomcat before 9.0.1"),
                labels: vec!["B".into(), "I".into(), "O".into(), "B".into()],
                iob_context: None,
            },
            TaggedSentence {
                tokens: tokenize("remote attackers win"),
                labels: vec!["B".into(), "I".into(), "O".into()],
                iob_context: None,
            },
        ];
        train_ap(&corpus, Stage::Iob, &TrainOptions { epochs: 3, seed: 3 }).unwrap()
    }

    #[test]
    fn checkpoint_is_stable_text() {
        let model = trained();
        let mut a = Vec::new();
        write_model(&mut a, &model).unwrap();
        let reloaded = read_model(a.as_slice()).unwrap();
        let mut b = Vec::new();
        write_model(&mut b, &reloaded).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("vulnkg-perceptron\t1\nstage\tiob\nlabels\tO\tB\tI\nsteps\t21\n"));
        let body: Vec<&str> = text.lines().skip(4).collect();
        let mut sorted = body.clone();
        sorted.sort_by_key(|l| l.split('\t').next().unwrap().to_string());
        assert_eq!(body, sorted);
    }

    #[test]
    fn reloaded_model_predicts_the_same() {
        let model = trained();
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        let reloaded = read_model(buf.as_slice()).unwrap();
        let toks = tokenize("Apache Tomcat before 9.0.1 lets remote attackers win");
        assert_eq!(model.tag(&toks, None), reloaded.tag(&toks, None));
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_model("hello\n".as_bytes()).is_err());
        let bad = format!("{MAGIC}\nstage\tiob\nlabels\tO\tB\tI\nsteps\t1\nbias\tQ\t1.0\n");
        assert!(read_model(bad.as_bytes()).is_err());
        let wrong_labels = format!("{MAGIC}\nstage\tiob\nlabels\tB\tO\tI\nsteps\t1\n");
        assert!(read_model(wrong_labels.as_bytes()).is_err());
    }
}
