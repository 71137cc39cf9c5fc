use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::encoder::normal_init;
use crate::error::Result;

/// Position-shared affine map from token vectors to IOB2 tag logits.
#[derive(Debug, Clone)]
pub struct TokenHead {
    weight: ParamId,
    bias: ParamId,
}

/// Affine map from the `[CLS]` vector to one event-presence logit.
#[derive(Debug, Clone)]
pub struct SepHead {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundHead {
    weight: Var,
    bias: Var,
}

pub const TOKEN_HEAD_PREFIX: &str = "token_head.";
pub const SEP_HEAD_PREFIX: &str = "sep_head.";

impl TokenHead {
    pub fn new(d_model: usize, num_tags: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(TokenHead {
            weight: store.add("token_head.weight", normal_init(&[d_model, num_tags], rng), true)?,
            bias: store.add("token_head.bias", Tensor::zeros(&[num_tags]), true)?,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundHead {
        BoundHead {
            weight: g.param(store, self.weight),
            bias: g.param(store, self.bias),
        }
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

impl SepHead {
    pub fn new(d_model: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(SepHead {
            weight: store.add("sep_head.weight", normal_init(&[d_model, 1], rng), true)?,
            bias: store.add("sep_head.bias", Tensor::zeros(&[1]), true)?,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundHead {
        BoundHead {
            weight: g.param(store, self.weight),
            bias: g.param(store, self.bias),
        }
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// `Dropout(x) · W + b`; `rng = None` disables dropout.
pub fn head_forward(
    g: &mut Graph,
    head: BoundHead,
    x: Var,
    dropout_p: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let x = g.dropout(x, dropout_p, rng)?;
    let m = g.matmul(x, head.weight)?;
    g.add_row(m, head.bias)
}
