//! Seeded synthetic corpora for desk-scale experiments.
//!
//! Event sentences embed lexicon trigger phrases among filler tokens drawn
//! from a disjoint pool (`w0`, `w1`, ...). Event-free sentences contain
//! filler only.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Sentence, Split};
use crate::error::{Error, Result};
use crate::tagging::TriggerSpan;

const DEFAULT_LEXICON: &[(&str, &[&[&str]])] = &[
    ("Conflict.Attack", &[&["attacked"], &["bombed"], &["opened", "fire"]]),
    ("Life.Die", &[&["died"], &["killed"], &["passed", "away"]]),
    ("Movement.Transport", &[&["arrived"], &["traveled"], &["set", "off"]]),
    ("Transaction.Transfer-Ownership", &[&["pay"], &["bought"], &["sold", "off"]]),
    ("Personnel.Elect", &[&["elected"], &["voted"], &["sworn", "in"]]),
    ("Justice.Arrest-Jail", &[&["arrested"], &["jailed"], &["taken", "into", "custody"]]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Size of the filler pool.
    pub filler_vocab: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Probability that a sentence carries at least one trigger.
    pub event_fraction: f64,
    /// Trigger phrases per `Type.Subtype` label.
    pub lexicon: BTreeMap<String, Vec<Vec<String>>>,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability of choosing a multi-word phrase when the label has one.
    pub multiword_fraction: f64,
    pub max_triggers: usize,
    pub sentences_per_doc: usize,
}

impl SynthSpec {
    /// The first `n_types` entries of the built-in lexicon.
    pub fn default_lexicon(n_types: usize) -> Result<BTreeMap<String, Vec<Vec<String>>>> {
        if n_types == 0 || n_types > DEFAULT_LEXICON.len() {
            return Err(Error::Config(format!(
                "built-in lexicon has 1..={} trigger types, asked for {n_types}",
                DEFAULT_LEXICON.len()
            )));
        }
        Ok(DEFAULT_LEXICON[..n_types]
            .iter()
            .map(|(label, phrases)| {
                let phrases = phrases
                    .iter()
                    .map(|p| p.iter().map(|w| w.to_string()).collect())
                    .collect();
                (label.to_string(), phrases)
            })
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.event_fraction) {
            return cfg(format!("event fraction {} outside [0, 1]", self.event_fraction));
        }
        if !(0.0..=1.0).contains(&self.multiword_fraction) {
            return cfg(format!("multi-word fraction {} outside [0, 1]", self.multiword_fraction));
        }
        if self.filler_vocab == 0 {
            return cfg("filler vocabulary must be non-empty".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return cfg(format!("sentence length range {}..={} is empty", self.min_len, self.max_len));
        }
        if self.max_triggers == 0 || self.sentences_per_doc == 0 {
            return cfg("max_triggers and sentences_per_doc must be positive".into());
        }
        if self.event_fraction > 0.0 && self.lexicon.is_empty() {
            return cfg("event sentences requested with an empty lexicon".into());
        }
        for (label, phrases) in &self.lexicon {
            if phrases.is_empty() {
                return cfg(format!("label '{label}' has no trigger phrases"));
            }
            for p in phrases {
                if p.is_empty() {
                    return cfg(format!("label '{label}' has an empty phrase"));
                }
                if p.len() > self.max_len {
                    return cfg(format!(
                        "phrase '{}' of '{label}' is longer than max_len {}",
                        p.join(" "),
                        self.max_len
                    ));
                }
                for w in p {
                    if is_filler(w) {
                        return cfg(format!("lexicon word '{w}' collides with the filler pool"));
                    }
                }
            }
        }
        Ok(())
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            filler_vocab: 200,
            train: 500,
            dev: 100,
            test: 100,
            event_fraction: 0.3,
            lexicon: SynthSpec::default_lexicon(4).expect("built-in lexicon"),
            min_len: 6,
            max_len: 16,
            multiword_fraction: 0.3,
            max_triggers: 2,
            sentences_per_doc: 5,
        }
    }
}

fn is_filler(w: &str) -> bool {
    w.strip_prefix('w')
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

pub fn generate_synthetic<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Corpus> {
    spec.validate()?;
    let all_labels: Vec<&String> = spec.lexicon.keys().collect();
    let mut sentences = Vec::with_capacity(spec.train + spec.dev + spec.test);

    let train = generate_split(spec, Split::Train, spec.train, &all_labels, rng);
    // dev/test only use labels that made it into train, so the corpus
    // stays loadable.
    let seen: BTreeSet<&String> = train.iter().flat_map(|s| &s.triggers).map(|t| &t.label).collect();
    let seen: Vec<&String> = all_labels.iter().copied().filter(|l| seen.contains(l)).collect();
    sentences.extend(train);
    sentences.extend(generate_split(spec, Split::Dev, spec.dev, &seen, rng));
    sentences.extend(generate_split(spec, Split::Test, spec.test, &seen, rng));
    Corpus::from_sentences(sentences)
}

fn generate_split<R: Rng + ?Sized>(
    spec: &SynthSpec,
    split: Split,
    n: usize,
    labels: &[&String],
    rng: &mut R,
) -> Vec<Sentence> {
    let name = match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    };
    let mut round_robin = 0;
    (0..n)
        .map(|i| {
            let doc_id = format!("{name}-doc{:04}", i / spec.sentences_per_doc);
            let sent_id = format!("{doc_id}-s{:02}", i % spec.sentences_per_doc);
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let is_event = !labels.is_empty() && rng.random::<f64>() < spec.event_fraction;
            let mut phrases: Vec<(&String, &Vec<String>)> = Vec::new();
            if is_event {
                let k = rng.random_range(1..=spec.max_triggers);
                let mut used = 0;
                for j in 0..k {
                    // cycle the first trigger through labels so each one is covered
                    let label = if j == 0 {
                        round_robin += 1;
                        labels[(round_robin - 1) % labels.len()]
                    } else {
                        *labels.choose(rng).expect("non-empty")
                    };
                    let phrase = pick_phrase(&spec.lexicon[label], spec.multiword_fraction, rng);
                    if j > 0 && used + phrase.len() > len {
                        break;
                    }
                    used += phrase.len();
                    phrases.push((label, phrase));
                }
            }
            let trigger_tokens: usize = phrases.iter().map(|(_, p)| p.len()).sum();
            let fillers = len.saturating_sub(trigger_tokens);
            // insertion gap for each phrase, in order
            let mut gaps: Vec<usize> = phrases.iter().map(|_| rng.random_range(0..=fillers)).collect();
            gaps.sort_unstable();
            let mut tokens = Vec::with_capacity(len.max(trigger_tokens));
            let mut triggers = Vec::with_capacity(phrases.len());
            let mut next = 0;
            for f in 0..=fillers {
                while next < phrases.len() && gaps[next] == f {
                    let (label, phrase) = phrases[next];
                    let start = tokens.len();
                    tokens.extend(phrase.iter().cloned());
                    triggers.push(TriggerSpan::new(start, tokens.len(), label.clone()));
                    next += 1;
                }
                if f < fillers {
                    tokens.push(format!("w{}", rng.random_range(0..spec.filler_vocab)));
                }
            }
            Sentence::new(doc_id, sent_id, split, tokens, triggers)
        })
        .collect()
}

fn pick_phrase<'a, R: Rng + ?Sized>(phrases: &'a [Vec<String>], multiword: f64, rng: &mut R) -> &'a Vec<String> {
    let (multi, single): (Vec<&Vec<String>>, Vec<&Vec<String>>) = phrases.iter().partition(|p| p.len() > 1);
    let want_multi = rng.random::<f64>() < multiword;
    let pool = match (want_multi, multi.is_empty(), single.is_empty()) {
        (true, false, _) | (false, false, true) => multi,
        _ => single,
    };
    pool.choose(rng).expect("non-empty phrase pool")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::parse_corpus;

    fn small(event_fraction: f64, multiword: f64) -> SynthSpec {
        SynthSpec {
            train: 60,
            dev: 20,
            test: 20,
            event_fraction,
            multiword_fraction: multiword,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn zero_event_fraction_has_no_events() {
        let c = generate_synthetic(&small(0.0, 0.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(c.sentences().all(|s| !s.has_event()));
    }

    #[test]
    fn full_event_fraction_has_events_everywhere() {
        let c = generate_synthetic(&small(1.0, 0.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(c.sentences().all(Sentence::has_event));
        assert!(c.sentences().flat_map(|s| &s.triggers).all(|t| t.len() == 1));
    }

    #[test]
    fn event_free_sentences_hold_only_filler() {
        let c = generate_synthetic(&small(0.5, 0.5), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for s in c.sentences() {
            for (i, tok) in s.tokens.iter().enumerate() {
                let inside = s.triggers.iter().any(|t| (t.start..t.end).contains(&i));
                assert_eq!(!is_filler(tok), inside, "{tok} in {}", s.sent_id);
            }
        }
        assert!(c.sentences().flat_map(|s| &s.triggers).any(|t| t.len() > 1));
    }

    #[test]
    fn survives_serialize_parse_round_trip() {
        let c = generate_synthetic(&small(0.3, 0.3), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let back = parse_corpus(&c.to_jsonl().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&small(0.3, 0.3), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_synthetic(&small(0.3, 0.3), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = generate_synthetic(&small(0.3, 0.3), &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_specs_rejected() {
        let mut spec = small(0.3, 0.3);
        spec.max_len = 2;
        spec.min_len = 1;
        spec.lexicon = SynthSpec::default_lexicon(6).unwrap(); // has a 3-word phrase
        assert!(matches!(generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Config(_))));
        let bad_frac = small(1.5, 0.0);
        assert!(generate_synthetic(&bad_frac, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let mut collide = small(0.3, 0.0);
        collide.lexicon.insert("X.Y".into(), vec![vec!["w12".into()]]);
        assert!(generate_synthetic(&collide, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
