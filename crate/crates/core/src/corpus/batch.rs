use rand::seq::SliceRandom;
use rand::Rng;

use super::{Sentence, Vocab, PAD_ID};
use crate::error::{Error, Result};
use crate::tagging::{encode_iob2, LabelSet};

/// Padded mini-batch. Row `i` holds the `i`-th sentence of the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Token ids padded with `PAD_ID`; `[CLS]` is not included.
    pub token_ids: Vec<Vec<usize>>,
    /// `true` for real tokens.
    pub pad_mask: Vec<Vec<bool>>,
    /// IOB2 tag ids, `0` at padded positions.
    pub gold_tags: Vec<Vec<usize>>,
    /// Event presence per sentence, derived from the gold triggers.
    pub y: Vec<u8>,
    /// Position of each row in the source sentence list.
    pub source: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn padded_len(&self) -> usize {
        self.token_ids.first().map_or(0, Vec::len)
    }

    /// Checks that every `y` agrees with the presence of a non-O gold tag.
    pub fn check_event_flags(&self) -> Result<()> {
        for (i, (tags, mask)) in self.gold_tags.iter().zip(&self.pad_mask).enumerate() {
            let has = tags.iter().zip(mask).any(|(&t, &m)| m && t != 0);
            if has != (self.y[i] == 1) {
                return Err(Error::Validation(format!(
                    "batch row {i}: event flag {} contradicts gold tags",
                    self.y[i]
                )));
            }
        }
        Ok(())
    }

    fn assemble(
        rows: &[usize],
        sentences: &[Sentence],
        vocab: &Vocab,
        labels: &LabelSet,
    ) -> Result<Self> {
        let width = rows.iter().map(|&i| sentences[i].tokens.len()).max().unwrap_or(0);
        let mut batch = Batch {
            token_ids: Vec::with_capacity(rows.len()),
            pad_mask: Vec::with_capacity(rows.len()),
            gold_tags: Vec::with_capacity(rows.len()),
            y: Vec::with_capacity(rows.len()),
            source: rows.to_vec(),
        };
        for &i in rows {
            let s = &sentences[i];
            let n = s.tokens.len();
            let mut ids = vocab.encode(&s.tokens);
            let mut tags = encode_iob2(labels, n, &s.triggers)
                .map_err(|e| Error::Validation(format!("sentence '{}': {e}", s.sent_id)))?;
            let mut mask = vec![true; n];
            ids.resize(width, PAD_ID);
            tags.resize(width, 0);
            mask.resize(width, false);
            batch.token_ids.push(ids);
            batch.gold_tags.push(tags);
            batch.pad_mask.push(mask);
            batch.y.push(u8::from(s.has_event()));
        }
        Ok(batch)
    }
}

/// Splits `sentences` into padded batches, optionally shuffled.
///
/// Sentences that do not fit `max_len` (tokens plus `[CLS]`) are refused
/// rather than truncated.
pub fn make_batches<R: Rng + ?Sized>(
    sentences: &[Sentence],
    vocab: &Vocab,
    labels: &LabelSet,
    batch_size: usize,
    max_len: usize,
    shuffle: Option<&mut R>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if let Some(s) = sentences.iter().find(|s| s.tokens.len() + 1 > max_len) {
        return Err(Error::Validation(format!(
            "sentence '{}' has {} tokens; max_len {max_len} leaves room for {} (truncation would drop gold triggers)",
            s.sent_id,
            s.tokens.len(),
            max_len.saturating_sub(1)
        )));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    if let Some(rng) = shuffle {
        order.shuffle(rng);
    }
    order
        .chunks(batch_size)
        .map(|rows| Batch::assemble(rows, sentences, vocab, labels))
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::Split;
    use crate::tagging::TriggerSpan;

    fn corpus(n: usize) -> (Vec<Sentence>, Vocab, LabelSet) {
        let sentences: Vec<Sentence> = (0..n)
            .map(|i| {
                let len = 2 + i % 4;
                let tokens = (0..len).map(|j| format!("w{j}")).collect();
                let triggers = if i % 3 == 0 { vec![TriggerSpan::new(1, 2, "E.x")] } else { vec![] };
                Sentence::new("d", format!("s{i}"), Split::Train, tokens, triggers)
            })
            .collect();
        let vocab = Vocab::build(&sentences, 1).unwrap();
        let labels = LabelSet::new(vec!["E.x".into()]).unwrap();
        (sentences, vocab, labels)
    }

    #[test]
    fn batch_sizes_cover_remainder() {
        let (s, v, l) = corpus(10);
        let batches = make_batches::<ChaCha8Rng>(&s, &v, &l, 3, 64, None).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        assert_eq!(sizes, [3, 3, 3, 1]);
    }

    #[test]
    fn event_flags_follow_triggers_and_padding_is_masked() {
        let (s, v, l) = corpus(10);
        let batches = make_batches::<ChaCha8Rng>(&s, &v, &l, 4, 64, None).unwrap();
        for b in &batches {
            b.check_event_flags().unwrap();
            for (row, &src) in b.source.iter().enumerate() {
                assert_eq!(b.y[row] == 1, s[src].has_event());
                let real = b.pad_mask[row].iter().filter(|&&m| m).count();
                assert_eq!(real, s[src].tokens.len());
                assert_eq!(b.token_ids[row].len(), b.padded_len());
            }
        }
    }

    #[test]
    fn shuffle_is_seeded() {
        let (s, v, l) = corpus(20);
        let order = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            make_batches(&s, &v, &l, 3, 64, Some(&mut rng))
                .unwrap()
                .into_iter()
                .flat_map(|b| b.source)
                .collect::<Vec<_>>()
        };
        assert_eq!(order(3), order(3));
        assert_ne!(order(3), order(4));
    }

    #[test]
    fn overlong_sentence_is_refused() {
        let (s, v, l) = corpus(5);
        // longest sentence has 5 tokens and needs max_len 6
        assert!(make_batches::<ChaCha8Rng>(&s, &v, &l, 2, 6, None).is_ok());
        let err = make_batches::<ChaCha8Rng>(&s, &v, &l, 2, 5, None).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(make_batches::<ChaCha8Rng>(&s, &v, &l, 0, 64, None).is_err());
    }

    #[test]
    fn tampered_flags_are_caught() {
        let (s, v, l) = corpus(4);
        let mut b = make_batches::<ChaCha8Rng>(&s, &v, &l, 4, 64, None).unwrap().remove(0);
        b.y[0] ^= 1;
        assert!(b.check_event_flags().is_err());
    }

    proptest! {
        #[test]
        fn event_flags_are_a_function_of_spans(flags in prop::collection::vec(any::<bool>(), 1..12)) {
            let (mut s, v, l) = corpus(flags.len());
            for (sent, &f) in s.iter_mut().zip(&flags) {
                sent.triggers = if f { vec![TriggerSpan::new(0, 1, "E.x")] } else { vec![] };
            }
            let batches = make_batches::<ChaCha8Rng>(&s, &v, &l, 5, 64, None).unwrap();
            let ys: Vec<bool> = batches.iter().flat_map(|b| b.y.iter().map(|&y| y == 1)).collect();
            prop_assert_eq!(ys, flags);
        }
    }
}
