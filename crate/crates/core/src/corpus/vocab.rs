use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Sentence;
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;

const SPECIALS: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];

/// Whitespace-token vocabulary built from the train split only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Tokens seen at least `min_count` times, after the three specials,
    /// in lexicographic order.
    pub fn build<'a>(train: impl IntoIterator<Item = &'a Sentence>, min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("vocabulary min_count must be at least 1".into()));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in train {
            for t in &s.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let words = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count && !SPECIALS.contains(&w))
            .map(|(w, _)| w.to_owned());
        Self::from_tokens(SPECIALS.iter().map(|s| s.to_string()).chain(words).collect())
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Checkpoint(format!(
                "vocabulary must start with {SPECIALS:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary entry '{t}'")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Vocab::from_tokens(Vec::<String>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn sent(tokens: &[&str]) -> Sentence {
        Sentence::new("d", "s", Split::Train, tokens.iter().map(|t| t.to_string()).collect(), vec![])
    }

    #[test]
    fn min_count_one_keeps_every_train_token() {
        let train = [sent(&["b", "a", "c"]), sent(&["a"])];
        let v = Vocab::build(&train, 1).unwrap();
        assert_eq!(v.len(), 6);
        for t in ["a", "b", "c"] {
            assert!(v.id(t) > CLS_ID);
        }
        assert_eq!(v.token(3), Some("a"));
    }

    #[test]
    fn rare_and_unseen_tokens_map_to_unk() {
        let train = [sent(&["a", "a", "b"])];
        let v = Vocab::build(&train, 2).unwrap();
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.id("never-seen"), UNK_ID);
        assert_ne!(v.id("a"), UNK_ID);
    }

    #[test]
    fn deterministic_and_rejects_zero_min_count() {
        let train = [sent(&["x", "y", "z", "x"])];
        assert_eq!(Vocab::build(&train, 1).unwrap(), Vocab::build(&train, 1).unwrap());
        assert!(Vocab::build(&train, 0).is_err());
    }
}
