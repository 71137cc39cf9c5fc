//! Sentences, splits, and the JSONL corpus format.
//!
//! One sentence per line:
//!
//! ```text
//! {"doc_id": "d1", "sent_id": "d1-3", "split": "train",
//!  "tokens": ["The", "company", "has", "agreed", "to", "pay", "Yukos"],
//!  "triggers": [{"start": 5, "end": 6, "label": "Transaction.Transfer-Ownership"}]}
//! ```
//!
//! `end` is exclusive. Prediction files use the same schema plus
//! `"pred": true` and `"event_probability"`.

mod batch;
mod synth;
mod vocab;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use batch::{make_batches, Batch};
pub use synth::{generate_synthetic, SynthSpec};
pub use vocab::{Vocab, CLS_ID, PAD_ID, UNK_ID};

use crate::error::{Error, Result};
use crate::tagging::{validate_spans, LabelSet, TriggerSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_id: String,
    pub split: Split,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub triggers: Vec<TriggerSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_probability: Option<f64>,
}

impl Sentence {
    pub fn new(
        doc_id: impl Into<String>,
        sent_id: impl Into<String>,
        split: Split,
        tokens: Vec<String>,
        triggers: Vec<TriggerSpan>,
    ) -> Self {
        Sentence {
            doc_id: doc_id.into(),
            sent_id: sent_id.into(),
            split,
            tokens,
            triggers,
            pred: None,
            event_probability: None,
        }
    }

    pub fn has_event(&self) -> bool {
        !self.triggers.is_empty()
    }

    pub fn key(&self) -> SentenceKey {
        SentenceKey {
            doc_id: self.doc_id.clone(),
            sent_id: self.sent_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_spans(self.tokens.len(), &self.triggers)
            .map_err(|e| Error::Validation(format!("sentence '{}': {e}", self.sent_id)))
    }
}

/// Identity used to align predictions with gold sentences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey {
    pub doc_id: String,
    pub sent_id: String,
}

/// A validated corpus with fixed document-level splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    /// Trigger types seen in `train`, sorted.
    pub label_set: LabelSet,
}

impl Corpus {
    pub fn from_sentences(sentences: Vec<Sentence>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        let mut doc_split: HashMap<&str, Split> = HashMap::new();
        for s in &sentences {
            s.validate()?;
            if !seen.insert((s.doc_id.as_str(), s.sent_id.as_str())) {
                return Err(Error::Validation(format!(
                    "duplicate sentence '{}' in document '{}'",
                    s.sent_id, s.doc_id
                )));
            }
            match doc_split.get(s.doc_id.as_str()) {
                Some(&split) if split != s.split => {
                    return Err(Error::Validation(format!(
                        "document '{}' appears in both {split:?} and {:?} splits (sentence '{}')",
                        s.doc_id, s.split, s.sent_id
                    )));
                }
                _ => {
                    doc_split.insert(&s.doc_id, s.split);
                }
            }
        }
        let label_set = LabelSet::from_labels(
            sentences
                .iter()
                .filter(|s| s.split == Split::Train)
                .flat_map(|s| s.triggers.iter().map(|t| t.label.as_str())),
        );
        for s in sentences.iter().filter(|s| s.split != Split::Train) {
            if let Some(t) = s.triggers.iter().find(|t| !label_set.contains(&t.label)) {
                return Err(Error::Validation(format!(
                    "sentence '{}': label '{}' never occurs in the train split",
                    s.sent_id, t.label
                )));
            }
        }
        let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for s in sentences {
            match s.split {
                Split::Train => train.push(s),
                Split::Dev => dev.push(s),
                Split::Test => test.push(s),
            }
        }
        Ok(Corpus {
            train,
            dev,
            test,
            label_set,
        })
    }

    pub fn split(&self, split: Split) -> &[Sentence] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Train, dev, then test, one JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        write_sentences(self.sentences())
    }
}

/// Parses JSONL sentences, checking each line's own span invariants only.
/// Blank lines are skipped; an empty input yields an empty list.
pub fn read_sentences(text: &str) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: Sentence = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    Corpus::from_sentences(read_sentences(text)?)
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    parse_corpus(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE_ONE: &str = r#"{"doc_id":"d1","sent_id":"d1-1","split":"train","tokens":["The","company","has","agreed","to","pay","Yukos","."],"triggers":[{"start":5,"end":6,"label":"Transaction.Transfer-Ownership"}]}"#;

    fn line(doc: &str, id: &str, split: &str, triggers: &str) -> String {
        format!(
            r#"{{"doc_id":"{doc}","sent_id":"{id}","split":"{split}","tokens":["a","b","c","d"],"triggers":[{triggers}]}}"#
        )
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_corpus(""), Err(Error::EmptyCorpus)));
        assert!(matches!(parse_corpus("\n  \n"), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn annotated_line_round_trips() {
        let corpus = parse_corpus(FIGURE_ONE).unwrap();
        assert_eq!(corpus.train.len(), 1);
        assert_eq!(corpus.label_set.types(), ["Transaction.Transfer-Ownership"]);
        assert_eq!(corpus.to_jsonl().unwrap().trim_end(), FIGURE_ONE);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{FIGURE_ONE}\n{{not json\n");
        match parse_corpus(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_and_out_of_range_triggers_rejected() {
        let overlap = line("d", "s1", "train", r#"{"start":0,"end":2,"label":"A.B"},{"start":1,"end":3,"label":"A.B"}"#);
        let err = parse_corpus(&overlap).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("s1"));
        let oob = line("d", "s9", "train", r#"{"start":3,"end":5,"label":"A.B"}"#);
        let err = parse_corpus(&oob).unwrap_err();
        assert!(err.to_string().contains("s9"), "{err}");
    }

    #[test]
    fn dev_label_missing_from_train_rejected() {
        let text = [
            line("d1", "s1", "train", r#"{"start":0,"end":1,"label":"A.B"}"#),
            line("d2", "s2", "dev", r#"{"start":0,"end":1,"label":"C.D"}"#),
        ]
        .join("\n");
        let err = parse_corpus(&text).unwrap_err();
        assert!(err.to_string().contains("C.D"));
    }

    #[test]
    fn documents_cannot_straddle_splits() {
        let text = [line("d1", "s1", "train", ""), line("d1", "s2", "test", "")].join("\n");
        assert!(matches!(parse_corpus(&text), Err(Error::Validation(_))));
        let dup = [line("d1", "s1", "train", ""), line("d1", "s1", "train", "")].join("\n");
        assert!(matches!(parse_corpus(&dup), Err(Error::Validation(_))));
    }

    #[test]
    fn label_set_is_sorted_union_of_train_labels() {
        let text = [
            line("d1", "s1", "train", r#"{"start":0,"end":1,"label":"Z.Z"}"#),
            line("d1", "s2", "train", r#"{"start":0,"end":1,"label":"A.A"},{"start":2,"end":4,"label":"M.M"}"#),
            line("d2", "s3", "dev", r#"{"start":0,"end":1,"label":"M.M"}"#),
        ]
        .join("\n");
        let c = parse_corpus(&text).unwrap();
        assert_eq!(c.label_set.types(), ["A.A", "M.M", "Z.Z"]);
        assert_eq!((c.train.len(), c.dev.len(), c.test.len()), (2, 1, 0));
    }

    #[test]
    fn prediction_fields_survive_round_trip() {
        let mut s: Sentence = serde_json::from_str(FIGURE_ONE).unwrap();
        s.pred = Some(true);
        s.event_probability = Some(0.25);
        let text = write_sentences([&s]).unwrap();
        assert!(text.contains(r#""pred":true"#));
        assert_eq!(read_sentences(&text).unwrap(), vec![s]);
    }
}
