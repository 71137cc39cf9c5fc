use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trigger phrase: tokens `start..end` of a sentence labelled `Type.Subtype`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TriggerSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl TriggerSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        TriggerSpan {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn same_offsets(&self, other: &TriggerSpan) -> bool {
        self.start == other.start && self.end == other.end
    }
}

/// Checks bounds and pairwise disjointness of spans over `n_tokens` tokens.
pub fn validate_spans(n_tokens: usize, spans: &[TriggerSpan]) -> Result<()> {
    for s in spans {
        if s.start >= s.end || s.end > n_tokens {
            return Err(Error::Validation(format!(
                "span {}..{} ('{}') outside a {n_tokens}-token sentence",
                s.start, s.end, s.label
            )));
        }
    }
    let mut sorted: Vec<&TriggerSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::Validation(format!(
                "overlapping spans {}..{} and {}..{}",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    Ok(())
}

/// Decoded IOB2 tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// Ordered trigger types and the IOB2 tag ids derived from them:
/// `0 = O`, `1 + 2t = B-t`, `2 + 2t = I-t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    types: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(types: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(types.len());
        for (i, t) in types.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Validation("empty trigger type name".into()));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate trigger type '{t}'")));
            }
        }
        Ok(LabelSet { types, index })
    }

    /// Label set over the distinct `labels`, sorted lexicographically.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut types: Vec<String> = labels.into_iter().map(str::to_owned).collect();
        types.sort();
        types.dedup();
        let index = types.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        LabelSet { types, index }
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_tags(&self) -> usize {
        2 * self.types.len() + 1
    }

    pub fn type_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn type_name(&self, t: usize) -> &str {
        &self.types[t]
    }

    pub fn begin_tag(&self, t: usize) -> usize {
        1 + 2 * t
    }

    pub fn inside_tag(&self, t: usize) -> usize {
        2 + 2 * t
    }

    pub fn tag(&self, id: usize) -> Result<Tag> {
        match id {
            0 => Ok(Tag::Outside),
            _ if id < self.num_tags() => {
                let t = (id - 1) / 2;
                Ok(if id % 2 == 1 { Tag::Begin(t) } else { Tag::Inside(t) })
            }
            _ => Err(Error::Validation(format!(
                "tag id {id} outside a {}-tag label set",
                self.num_tags()
            ))),
        }
    }

    pub fn tag_name(&self, id: usize) -> Result<String> {
        Ok(match self.tag(id)? {
            Tag::Outside => "O".to_owned(),
            Tag::Begin(t) => format!("B-{}", self.types[t]),
            Tag::Inside(t) => format!("I-{}", self.types[t]),
        })
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.types.join(", "))
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.types.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let types = Vec::<String>::deserialize(d)?;
        LabelSet::new(types).map_err(serde::de::Error::custom)
    }
}
