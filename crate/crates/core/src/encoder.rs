//! Transformer encoder trained from random initialisation.
//!
//! Inputs are whitespace-token ids; a `[CLS]` id is prepended and its final
//! vector serves as the sentence representation. Blocks are post-norm:
//! `LN(x + Dropout(MHA(x)))` followed by `LN(h + Dropout(FFN(h)))`.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::corpus::CLS_ID;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_p: f64,
}

impl EncoderConfig {
    /// d_model 64, 4 heads, 2 layers, d_ff 128, max_len 64.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            max_len: 64,
            dropout_p: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder {name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not a multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gamma: ParamId,
    ln1_beta: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_gamma: ParamId,
    ln2_beta: ParamId,
}

/// Parameter handles of one block bound onto a graph.
#[derive(Debug, Clone)]
pub struct BoundLayer {
    wq: Var,
    bq: Var,
    wk: Var,
    bk: Var,
    wv: Var,
    bv: Var,
    wo: Var,
    bo: Var,
    ln1_gamma: Var,
    ln1_beta: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    ln2_gamma: Var,
    ln2_beta: Var,
}

#[derive(Debug, Clone)]
pub struct BoundEncoder {
    token_emb: Var,
    pos_emb: Var,
    layers: Vec<BoundLayer>,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    /// `1 × d_model`
    pub cls_vector: Var,
    /// `n × d_model`; `None` for an input without tokens.
    pub token_vectors: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub out: Var,
    /// One `(n+1) × (n+1)` weight matrix per head.
    pub attention: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    token_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<LayerParams>,
}

pub(crate) fn normal_init(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let dist = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
    t
}

pub(crate) fn reborrow<'a>(rng: &'a mut Option<&mut ChaCha8Rng>) -> Option<&'a mut ChaCha8Rng> {
    rng.as_mut().map(|r| &mut **r)
}

impl Encoder {
    /// Registers all encoder parameters in `store` under the `encoder.` prefix.
    pub fn new(config: EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let token_emb = store.add("encoder.embed.token", normal_init(&[config.vocab_size, d], rng), true)?;
        let pos_emb = store.add("encoder.embed.position", normal_init(&[config.max_len, d], rng), true)?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = |s: &str| format!("encoder.layers.{l}.{s}");
            let mut w = |name: &str, shape: &[usize], store: &mut ParamStore| {
                store.add(p(name), normal_init(shape, rng), true)
            };
            let wq = w("attn.wq", &[d, d], store)?;
            let wk = w("attn.wk", &[d, d], store)?;
            let wv = w("attn.wv", &[d, d], store)?;
            let wo = w("attn.wo", &[d, d], store)?;
            let w1 = w("ff.w1", &[d, config.d_ff], store)?;
            let w2 = w("ff.w2", &[config.d_ff, d], store)?;
            let zeros = |n: usize| Tensor::zeros(&[n]);
            let ones = |n: usize| Tensor::filled(&[n], 1.0);
            layers.push(LayerParams {
                wq,
                bq: store.add(p("attn.bq"), zeros(d), true)?,
                wk,
                bk: store.add(p("attn.bk"), zeros(d), true)?,
                wv,
                bv: store.add(p("attn.bv"), zeros(d), true)?,
                wo,
                bo: store.add(p("attn.bo"), zeros(d), true)?,
                ln1_gamma: store.add(p("ln1.gamma"), ones(d), true)?,
                ln1_beta: store.add(p("ln1.beta"), zeros(d), true)?,
                w1,
                b1: store.add(p("ff.b1"), zeros(config.d_ff), true)?,
                w2,
                b2: store.add(p("ff.b2"), zeros(d), true)?,
                ln2_gamma: store.add(p("ln2.gamma"), ones(d), true)?,
                ln2_beta: store.add(p("ln2.beta"), zeros(d), true)?,
            });
        }
        Ok(Encoder {
            config,
            token_emb,
            pos_emb,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundEncoder {
        BoundEncoder {
            token_emb: g.param(store, self.token_emb),
            pos_emb: g.param(store, self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| BoundLayer {
                    wq: g.param(store, l.wq),
                    bq: g.param(store, l.bq),
                    wk: g.param(store, l.wk),
                    bk: g.param(store, l.bk),
                    wv: g.param(store, l.wv),
                    bv: g.param(store, l.bv),
                    wo: g.param(store, l.wo),
                    bo: g.param(store, l.bo),
                    ln1_gamma: g.param(store, l.ln1_gamma),
                    ln1_beta: g.param(store, l.ln1_beta),
                    w1: g.param(store, l.w1),
                    b1: g.param(store, l.b1),
                    w2: g.param(store, l.w2),
                    b2: g.param(store, l.b2),
                    ln2_gamma: g.param(store, l.ln2_gamma),
                    ln2_beta: g.param(store, l.ln2_beta),
                })
                .collect(),
        }
    }

    /// `[CLS]` followed by `token_ids`, as summed token and position embeddings.
    pub fn embed(&self, g: &mut Graph, bound: &BoundEncoder, token_ids: &[usize]) -> Result<Var> {
        let n = token_ids.len();
        if n + 1 > self.config.max_len {
            return Err(Error::Validation(format!(
                "input of {n} tokens exceeds max_len {} (including [CLS])",
                self.config.max_len
            )));
        }
        if let Some(&bad) = token_ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::Index(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let mut ids = Vec::with_capacity(n + 1);
        ids.push(CLS_ID);
        ids.extend_from_slice(token_ids);
        let positions: Vec<usize> = (0..=n).collect();
        let tok = g.gather(bound.token_emb, &ids)?;
        let pos = g.gather(bound.pos_emb, &positions)?;
        g.add(tok, pos)
    }

    /// One post-norm transformer block. `key_mask[j]` is false for padding.
    pub fn self_attention_block(
        &self,
        g: &mut Graph,
        layer: &BoundLayer,
        x: Var,
        key_mask: &[bool],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BlockOutput> {
        let rows = g.value(x).rows();
        if key_mask.len() != rows {
            return Err(Error::Shape(format!("pad mask of {} for {rows} rows", key_mask.len())));
        }
        let p = self.config.dropout_p;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let affine = |g: &mut Graph, x: Var, w: Var, b: Var| -> Result<Var> {
            let m = g.matmul(x, w)?;
            g.add_row(m, b)
        };
        let q = affine(g, x, layer.wq, layer.bq)?;
        let k = affine(g, x, layer.wk, layer.bk)?;
        let v = affine(g, x, layer.wv, layer.bv)?;
        let mut heads = Vec::with_capacity(self.config.n_heads);
        let mut attention = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, scale);
            let weights = g.masked_softmax(scores, key_mask)?;
            attention.push(weights);
            heads.push(g.matmul(weights, vh)?);
        }
        let merged = g.concat_cols(&heads)?;
        let attn_out = affine(g, merged, layer.wo, layer.bo)?;
        let attn_out = g.dropout(attn_out, p, reborrow(&mut rng))?;
        let res = g.add(x, attn_out)?;
        let h = layer_norm_affine(g, res, layer.ln1_gamma, layer.ln1_beta)?;

        let ff = affine(g, h, layer.w1, layer.b1)?;
        let ff = g.gelu(ff);
        let ff = affine(g, ff, layer.w2, layer.b2)?;
        let ff = g.dropout(ff, p, reborrow(&mut rng))?;
        let res = g.add(h, ff)?;
        let out = layer_norm_affine(g, res, layer.ln2_gamma, layer.ln2_beta)?;
        Ok(BlockOutput { out, attention })
    }

    /// Embeds, runs every block, and splits off the `[CLS]` row.
    /// `pad_mask[i]` is true for real tokens; `rng = None` is evaluation mode.
    pub fn encode(
        &self,
        g: &mut Graph,
        bound: &BoundEncoder,
        token_ids: &[usize],
        pad_mask: &[bool],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncoderOutput> {
        if pad_mask.len() != token_ids.len() {
            return Err(Error::Shape(format!(
                "{} token ids with {} mask entries",
                token_ids.len(),
                pad_mask.len()
            )));
        }
        let mut key_mask = Vec::with_capacity(pad_mask.len() + 1);
        key_mask.push(true);
        key_mask.extend_from_slice(pad_mask);
        let mut x = self.embed(g, bound, token_ids)?;
        for layer in &bound.layers {
            x = self.self_attention_block(g, layer, x, &key_mask, reborrow(&mut rng))?.out;
        }
        let n = token_ids.len();
        let cls_vector = g.slice_rows(x, 0, 1)?;
        let token_vectors = if n > 0 { Some(g.slice_rows(x, 1, n)?) } else { None };
        Ok(EncoderOutput {
            cls_vector,
            token_vectors,
        })
    }

    pub fn bound_layer<'a>(&self, bound: &'a BoundEncoder, l: usize) -> &'a BoundLayer {
        &bound.layers[l]
    }
}

fn layer_norm_affine(g: &mut Graph, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let n = g.layer_norm(x, LAYER_NORM_EPS);
    let s = g.mul_row(n, gamma)?;
    g.add_row(s, beta)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;

    fn setup(cfg: EncoderConfig, seed: u64) -> (Encoder, ParamStore) {
        let mut store = ParamStore::new();
        let enc = Encoder::new(cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (enc, store)
    }

    fn small() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 30,
            d_model: 16,
            n_heads: 4,
            n_layers: 2,
            d_ff: 24,
            max_len: 20,
            dropout_p: 0.3,
        }
    }

    fn run(enc: &Encoder, store: &ParamStore, ids: &[usize], mask: &[bool]) -> (Tensor, Option<Tensor>) {
        let mut g = Graph::new();
        let b = enc.bind(&mut g, store);
        let out = enc.encode(&mut g, &b, ids, mask, None).unwrap();
        (
            g.value(out.cls_vector).clone(),
            out.token_vectors.map(|v| g.value(v).clone()),
        )
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = small();
        c.dropout_p = 1.0;
        assert!(c.validate().is_err());
        assert!(EncoderConfig::desk(10).validate().is_ok());
    }

    #[test]
    fn embed_shapes_and_positions() {
        let (enc, store) = setup(small(), 1);
        let mut g = Graph::new();
        let b = enc.bind(&mut g, &store);
        let empty = enc.embed(&mut g, &b, &[]).unwrap();
        assert_eq!(g.value(empty).shape(), &[1, 16]);
        let seven = enc.embed(&mut g, &b, &[5, 6, 7, 8, 9, 10, 11]).unwrap();
        assert_eq!(g.value(seven).shape(), &[8, 16]);
        let same = enc.embed(&mut g, &b, &[5, 5]).unwrap();
        assert_ne!(g.value(same).row(1), g.value(same).row(2));
    }

    #[test]
    fn embed_errors() {
        let (enc, store) = setup(small(), 1);
        let mut g = Graph::new();
        let b = enc.bind(&mut g, &store);
        assert!(matches!(enc.embed(&mut g, &b, &[30]), Err(Error::Index(_))));
        assert!(matches!(enc.embed(&mut g, &b, &[3; 20]), Err(Error::Validation(_))));
        assert!(enc.embed(&mut g, &b, &[3; 19]).is_ok());
    }

    #[test]
    fn single_token_attention_is_one() {
        for heads in [1, 2, 4, 8] {
            let cfg = EncoderConfig { n_heads: heads, ..small() };
            let (enc, store) = setup(cfg, 2);
            let mut g = Graph::new();
            let b = enc.bind(&mut g, &store);
            let x = enc.embed(&mut g, &b, &[]).unwrap();
            let out = enc
                .self_attention_block(&mut g, enc.bound_layer(&b, 0), x, &[true], None)
                .unwrap();
            assert_eq!(out.attention.len(), heads);
            for a in out.attention {
                assert_eq!(g.value(a).data(), &[1.0]);
            }
        }
    }

    #[test]
    fn attention_rows_are_distributions_with_zero_on_padding() {
        let (enc, store) = setup(small(), 3);
        let mut g = Graph::new();
        let b = enc.bind(&mut g, &store);
        let x = enc.embed(&mut g, &b, &[4, 5, 6, 0, 0]).unwrap();
        let mask = [true, true, true, true, false, false];
        let out = enc
            .self_attention_block(&mut g, enc.bound_layer(&b, 0), x, &mask, None)
            .unwrap();
        for a in out.attention {
            let w = g.value(a);
            for r in 0..w.rows() {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert_eq!(w.at(r, 4), 0.0);
                assert_eq!(w.at(r, 5), 0.0);
            }
        }
    }

    #[test]
    fn padding_never_changes_real_outputs() {
        let (enc, store) = setup(small(), 4);
        let ids = [7, 3, 9, 12];
        let (cls, toks) = run(&enc, &store, &ids, &[true; 4]);
        let toks = toks.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for extra in 1..5 {
            let mut padded = ids.to_vec();
            let mut mask = vec![true; 4];
            for _ in 0..extra {
                // arbitrary ids in padded slots
                padded.push(rng.random_range(0..30));
                mask.push(false);
            }
            let (pcls, ptoks) = run(&enc, &store, &padded, &mask);
            let ptoks = ptoks.unwrap();
            for (a, b) in cls.data().iter().zip(pcls.data()) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in toks.data().iter().zip(&ptoks.data()[..toks.numel()]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eval_mode_is_bitwise_deterministic_and_training_is_not_identity() {
        let (enc, store) = setup(small(), 5);
        let ids = [3, 4, 5];
        let a = run(&enc, &store, &ids, &[true; 3]);
        let b = run(&enc, &store, &ids, &[true; 3]);
        assert_eq!(a, b);

        let mut g = Graph::new();
        let bound = enc.bind(&mut g, &store);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = enc.encode(&mut g, &bound, &ids, &[true; 3], Some(&mut rng)).unwrap();
        assert_ne!(g.value(out.cls_vector), &a.0);
    }

    #[test]
    fn swapping_tokens_changes_output() {
        for seed in 0..5 {
            let (enc, store) = setup(small(), seed);
            let (_, a) = run(&enc, &store, &[3, 4, 5], &[true; 3]);
            let (_, b) = run(&enc, &store, &[4, 3, 5], &[true; 3]);
            assert_ne!(a, b);
        }
    }

    #[test]
    fn empty_sentence_has_only_cls() {
        let (enc, store) = setup(small(), 6);
        let (cls, toks) = run(&enc, &store, &[], &[]);
        assert_eq!(cls.shape(), &[1, 16]);
        assert!(toks.is_none());
    }
}
