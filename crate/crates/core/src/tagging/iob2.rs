//! IOB2 span codec.
//!
//! Decoding is total: ill-formed sequences are repaired rather than rejected.
//! An `I-t` that does not continue an open `t` span opens a new span, as if
//! it were `B-t`.

use super::labels::{validate_spans, LabelSet, Tag, TriggerSpan};
use crate::error::{Error, Result};

pub fn encode_iob2(labels: &LabelSet, n_tokens: usize, spans: &[TriggerSpan]) -> Result<Vec<usize>> {
    validate_spans(n_tokens, spans)?;
    let mut tags = vec![0; n_tokens];
    for s in spans {
        let t = labels
            .type_index(&s.label)
            .ok_or_else(|| Error::Validation(format!("unknown trigger type '{}'", s.label)))?;
        tags[s.start] = labels.begin_tag(t);
        for tag in &mut tags[s.start + 1..s.end] {
            *tag = labels.inside_tag(t);
        }
    }
    Ok(tags)
}

pub fn decode_iob2(labels: &LabelSet, tags: &[usize]) -> Result<Vec<TriggerSpan>> {
    let mut spans = Vec::new();
    // (start, type) of the span being extended
    let mut open: Option<(usize, usize)> = None;
    for (i, &id) in tags.iter().enumerate() {
        let tag = labels.tag(id)?;
        let continues = matches!((tag, open), (Tag::Inside(t), Some((_, o))) if t == o);
        if continues {
            continue;
        }
        if let Some((start, t)) = open.take() {
            spans.push(TriggerSpan::new(start, i, labels.type_name(t)));
        }
        match tag {
            Tag::Outside => {}
            Tag::Begin(t) | Tag::Inside(t) => open = Some((i, t)),
        }
    }
    if let Some((start, t)) = open {
        spans.push(TriggerSpan::new(start, tags.len(), labels.type_name(t)));
    }
    Ok(spans)
}
