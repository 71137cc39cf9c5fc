use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heads::{head_forward, BoundHead, SepHead, TokenHead, SEP_HEAD_PREFIX, TOKEN_HEAD_PREFIX};
use super::iob2::decode_iob2;
use super::labels::{LabelSet, TriggerSpan};
use crate::autodiff::{sigmoid, Graph, ParamSnapshot, ParamStore, Var};
use crate::corpus::Vocab;
use crate::encoder::{reborrow, BoundEncoder, Encoder, EncoderConfig, EncoderOutput};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "trigtag-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Encoder plus token and event-presence heads, with the label set and
/// vocabulary they were built for.
#[derive(Debug, Clone)]
pub struct TriggerModel {
    encoder: Encoder,
    token_head: TokenHead,
    sep_head: SepHead,
    labels: LabelSet,
    vocab: Vocab,
    pub store: ParamStore,
}

#[derive(Debug, Clone)]
pub struct BoundModel {
    pub encoder: BoundEncoder,
    pub token_head: BoundHead,
    pub sep_head: BoundHead,
}

#[derive(Debug, Clone, Copy)]
pub struct SentenceOutputs {
    pub encoded: EncoderOutput,
    /// `n × num_tags`, `None` for an empty sentence.
    pub token_logits: Option<Var>,
    /// `1 × 1`
    pub sep_logit: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePrediction {
    pub tag_ids: Vec<usize>,
    pub spans: Vec<TriggerSpan>,
    pub event_probability: f64,
    /// `event_probability >= threshold`. Diagnostic only; spans are never filtered by it.
    pub event_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub encoder: EncoderConfig,
    pub labels: LabelSet,
    pub vocab: Vocab,
    pub params: ParamSnapshot,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

impl TriggerModel {
    pub fn new(config: EncoderConfig, labels: LabelSet, vocab: Vocab, rng: &mut ChaCha8Rng) -> Result<Self> {
        if config.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "encoder vocab_size {} but vocabulary has {} entries",
                config.vocab_size,
                vocab.len()
            )));
        }
        let mut store = ParamStore::new();
        let d = config.d_model;
        let encoder = Encoder::new(config, &mut store, rng)?;
        let token_head = TokenHead::new(d, labels.num_tags(), &mut store, rng)?;
        let sep_head = SepHead::new(d, &mut store, rng)?;
        Ok(TriggerModel {
            encoder,
            token_head,
            sep_head,
            labels,
            vocab,
            store,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn token_head(&self) -> &TokenHead {
        &self.token_head
    }

    pub fn sep_head(&self) -> &SepHead {
        &self.sep_head
    }

    /// Largest absolute gradient currently held by the event-presence head.
    pub fn sep_head_max_abs_grad(&self) -> f64 {
        self.store.max_abs_grad(SEP_HEAD_PREFIX)
    }

    pub fn token_head_max_abs_grad(&self) -> f64 {
        self.store.max_abs_grad(TOKEN_HEAD_PREFIX)
    }

    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        BoundModel {
            encoder: self.encoder.bind(g, &self.store),
            token_head: self.token_head.bind(g, &self.store),
            sep_head: self.sep_head.bind(g, &self.store),
        }
    }

    /// Encoder and both heads for one (possibly padded) sentence.
    pub fn forward_sentence(
        &self,
        g: &mut Graph,
        bound: &BoundModel,
        token_ids: &[usize],
        pad_mask: &[bool],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<SentenceOutputs> {
        let p = self.config().dropout_p;
        let encoded = self
            .encoder
            .encode(g, &bound.encoder, token_ids, pad_mask, reborrow(&mut rng))?;
        let token_logits = match encoded.token_vectors {
            Some(v) => Some(head_forward(g, bound.token_head, v, p, reborrow(&mut rng))?),
            None => None,
        };
        let sep_logit = head_forward(g, bound.sep_head, encoded.cls_vector, p, reborrow(&mut rng))?;
        Ok(SentenceOutputs {
            encoded,
            token_logits,
            sep_logit,
        })
    }

    /// Evaluation-mode tagging of one sentence: per-token argmax, then IOB2 decoding.
    pub fn predict(&self, tokens: &[String], threshold: f64) -> Result<SentencePrediction> {
        let ids = self.vocab.encode(tokens);
        let mask = vec![true; ids.len()];
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let out = self.forward_sentence(&mut g, &bound, &ids, &mask, None)?;
        let tag_ids = match out.token_logits {
            Some(l) => {
                let logits = g.value(l);
                (0..logits.rows()).map(|r| argmax(logits.row(r))).collect()
            }
            None => Vec::new(),
        };
        let spans = decode_iob2(&self.labels, &tag_ids)?;
        let event_probability = sigmoid(g.value(out.sep_logit).item());
        Ok(SentencePrediction {
            tag_ids,
            spans,
            event_probability,
            event_flag: event_probability >= threshold,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            encoder: self.config().clone(),
            labels: self.labels.clone(),
            vocab: self.vocab.clone(),
            params: ParamSnapshot::capture(&self.store)?,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint '{}' version {}",
                ckpt.format, ckpt.version
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = TriggerModel::new(ckpt.encoder.clone(), ckpt.labels.clone(), ckpt.vocab.clone(), &mut rng)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.params.restore(&mut model.store)?;
        Ok(model)
    }

    pub fn checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint()?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(&ckpt)
    }
}
