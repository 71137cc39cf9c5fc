//! ACE-style trigger scoring: exact (offsets, type, subtype) matching,
//! micro-averaged over the corpus, plus event-presence and
//! misclassification diagnostics.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Sentence, SentenceKey};
use crate::error::{Error, Result};
use crate::tagging::TriggerSpan;

/// Precision, recall and F1 from micro counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio_or_zero(tp, tp + fp);
        let recall = ratio_or_zero(tp, tp + fn_);
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

fn ratio_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Sentence-level event accuracy, or a marker when the system predicted
/// no trigger in any sentence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventAccuracy {
    Value(f64),
    Marker(NoPrediction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoPrediction {
    NoPrediction,
}

impl EventAccuracy {
    pub fn value(self) -> Option<f64> {
        match self {
            EventAccuracy::Value(v) => Some(v),
            EventAccuracy::Marker(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub gold: String,
    pub pred: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Offsets-only matching.
    pub identification: Prf,
    pub sentence_event_accuracy: EventAccuracy,
    /// Offset-matched (gold, pred) label pairs, sorted.
    pub confusion: Vec<ConfusionEntry>,
    /// Off-diagonal share of `confusion`; 0 when nothing matched on offsets.
    pub misclassified_event_fraction: f64,
    /// Accuracy of `event_probability >= 0.5` against gold event presence,
    /// when every prediction carries a probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sep_head_accuracy: Option<f64>,
    pub gold_fingerprint: String,
}

impl EvalReport {
    pub fn classification(&self) -> Prf {
        Prf {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }

    /// `P R F` as tab-separated percentages to one decimal.
    pub fn table_row(&self, name: &str) -> String {
        table_row(name, self.precision, self.recall, self.f1)
    }
}

pub fn table_row(name: &str, precision: f64, recall: f64, f1: f64) -> String {
    format!(
        "{name}\t{:.1}\t{:.1}\t{:.1}",
        100.0 * precision,
        100.0 * recall,
        100.0 * f1
    )
}

/// Per-sentence outcome of matching.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceMatch {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Offsets-only true positives.
    pub id_tp: usize,
    /// `(gold label, pred label)` of every offset-matched pair.
    pub pairs: Vec<(String, String)>,
}

/// Greedy one-to-one matching inside one sentence. Exact matches are taken
/// first; remaining spans are then paired on offsets alone for the
/// identification counts and the confusion pairs.
pub fn match_sentence(pred: &[TriggerSpan], gold: &[TriggerSpan]) -> SentenceMatch {
    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut m = SentenceMatch::default();
    for (i, p) in pred.iter().enumerate() {
        if let Some(j) = (0..gold.len()).find(|&j| !gold_used[j] && gold[j] == *p) {
            gold_used[j] = true;
            pred_used[i] = true;
            m.tp += 1;
            m.pairs.push((gold[j].label.clone(), p.label.clone()));
        }
    }
    let exact = m.tp;
    m.fp = pred.len() - exact;
    m.fn_ = gold.len() - exact;
    m.id_tp = exact;
    for (i, p) in pred.iter().enumerate() {
        if pred_used[i] {
            continue;
        }
        if let Some(j) = (0..gold.len()).find(|&j| !gold_used[j] && gold[j].same_offsets(p)) {
            gold_used[j] = true;
            m.id_tp += 1;
            m.pairs.push((gold[j].label.clone(), p.label.clone()));
        }
    }
    m
}

/// Pairs each prediction with its gold sentence by `(doc_id, sent_id)`.
/// Both sides must cover exactly the same sentences.
pub fn align<'a>(pred: &'a [Sentence], gold: &'a [Sentence]) -> Result<Vec<(&'a Sentence, &'a Sentence)>> {
    let mut by_key: HashMap<SentenceKey, &Sentence> = HashMap::with_capacity(gold.len());
    for s in gold {
        if by_key.insert(s.key(), s).is_some() {
            return Err(Error::Alignment(format!(
                "gold sentence {}/{} appears twice",
                s.doc_id, s.sent_id
            )));
        }
    }
    let mut pairs = Vec::with_capacity(pred.len());
    for p in pred {
        let g = by_key
            .remove(&p.key())
            .ok_or_else(|| Error::Alignment(format!("prediction {}/{} has no gold sentence", p.doc_id, p.sent_id)))?;
        pairs.push((p, g));
    }
    if let Some(s) = gold.iter().find(|s| by_key.contains_key(&s.key())) {
        return Err(Error::Alignment(format!(
            "gold sentence {}/{} has no prediction",
            s.doc_id, s.sent_id
        )));
    }
    Ok(pairs)
}

/// SHA-256 over the gold sentences in key order, so it does not depend on
/// file order.
pub fn gold_fingerprint(gold: &[Sentence]) -> Result<String> {
    let mut sorted: Vec<&Sentence> = gold.iter().collect();
    sorted.sort_by_key(|s| s.key());
    let mut hasher = Sha256::new();
    for s in sorted {
        let line = serde_json::to_string(&(&s.doc_id, &s.sent_id, &s.tokens, &s.triggers))?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn score_triggers(pred: &[Sentence], gold: &[Sentence]) -> Result<EvalReport> {
    let pairs = align(pred, gold)?;
    let (mut tp, mut fp, mut fn_, mut id_tp) = (0, 0, 0, 0);
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (p, g) in &pairs {
        let m = match_sentence(&p.triggers, &g.triggers);
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        id_tp += m.id_tp;
        for pair in m.pairs {
            *confusion.entry(pair).or_default() += 1;
        }
    }
    let n_pred: usize = pairs.iter().map(|(p, _)| p.triggers.len()).sum();
    let n_gold: usize = pairs.iter().map(|(_, g)| g.triggers.len()).sum();
    let c = Prf::from_counts(tp, fp, fn_);
    let matched: usize = confusion.values().sum();
    let wrong: usize = confusion.iter().filter(|((g, p), _)| g != p).map(|(_, n)| n).sum();
    let sep_head_accuracy = if !pairs.is_empty() && pairs.iter().all(|(p, _)| p.event_probability.is_some()) {
        let correct = pairs
            .iter()
            .filter(|(p, g)| (p.event_probability.unwrap_or(0.0) >= 0.5) == g.has_event())
            .count();
        Some(correct as f64 / pairs.len() as f64)
    } else {
        None
    };
    Ok(EvalReport {
        sentences: pairs.len(),
        tp,
        fp,
        fn_,
        precision: c.precision,
        recall: c.recall,
        f1: c.f1,
        identification: Prf::from_counts(id_tp, n_pred - id_tp, n_gold - id_tp),
        sentence_event_accuracy: event_accuracy_of(&pairs),
        confusion: confusion
            .into_iter()
            .map(|((gold, pred), count)| ConfusionEntry { gold, pred, count })
            .collect(),
        misclassified_event_fraction: ratio_or_zero(wrong, matched),
        sep_head_accuracy,
        gold_fingerprint: gold_fingerprint(gold)?,
    })
}

fn event_accuracy_of(pairs: &[(&Sentence, &Sentence)]) -> EventAccuracy {
    let flagged: Vec<_> = pairs.iter().filter(|(p, _)| p.has_event()).collect();
    if flagged.is_empty() {
        return EventAccuracy::Marker(NoPrediction::NoPrediction);
    }
    let correct = flagged.iter().filter(|(_, g)| g.has_event()).count();
    EventAccuracy::Value(correct as f64 / flagged.len() as f64)
}

/// Among sentences where the system predicts at least one trigger, the
/// fraction whose gold also has one.
pub fn sentence_event_accuracy(pred: &[Sentence], gold: &[Sentence]) -> Result<EventAccuracy> {
    Ok(event_accuracy_of(&align(pred, gold)?))
}

/// Among predictions whose offsets match a gold trigger, the fraction
/// carrying a different label.
pub fn misclassification_fraction(pred: &[Sentence], gold: &[Sentence]) -> Result<f64> {
    let (mut matched, mut wrong) = (0, 0);
    for (p, g) in align(pred, gold)? {
        let m = match_sentence(&p.triggers, &g.triggers);
        matched += m.pairs.len();
        wrong += m.pairs.iter().filter(|(a, b)| a != b).count();
    }
    Ok(ratio_or_zero(wrong, matched))
}

/// `a` relative to `b`: deltas are `a - b`, `fp_ratio` is `fp_a / fp_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub fp_a: usize,
    pub fp_b: usize,
    /// 1 when both are 0; absent when only `fp_b` is 0.
    pub fp_ratio: Option<f64>,
    pub precision_delta: f64,
    pub recall_delta: f64,
    pub f1_delta: f64,
    /// Absent unless both reports carry a value.
    pub sentence_event_accuracy_delta: Option<f64>,
}

pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<RunComparison> {
    if a.gold_fingerprint != b.gold_fingerprint {
        return Err(Error::Validation(format!(
            "reports were scored against different gold data ({} vs {})",
            a.gold_fingerprint, b.gold_fingerprint
        )));
    }
    let fp_ratio = match (a.fp, b.fp) {
        (0, 0) => Some(1.0),
        (_, 0) => None,
        (x, y) => Some(x as f64 / y as f64),
    };
    let sentence_event_accuracy_delta = match (a.sentence_event_accuracy.value(), b.sentence_event_accuracy.value()) {
        (Some(x), Some(y)) => Some(x - y),
        _ => None,
    };
    Ok(RunComparison {
        fp_a: a.fp,
        fp_b: b.fp,
        fp_ratio,
        precision_delta: a.precision - b.precision,
        recall_delta: a.recall - b.recall,
        f1_delta: a.f1 - b.f1,
        sentence_event_accuracy_delta,
    })
}
