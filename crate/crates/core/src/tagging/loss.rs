//! Token-level tagging loss, sentence-level event-presence loss, and their sum.

use rand_chacha::ChaCha8Rng;

use super::model::{BoundModel, TriggerModel};
use crate::autodiff::{Graph, Tensor, Var};
use crate::corpus::Batch;
use crate::encoder::reborrow;
use crate::error::{Error, Result};

/// Summed negative log-likelihood of the gold tags over real tokens.
/// The `[CLS]` row never reaches this function and padded rows are masked.
pub fn token_loss(g: &mut Graph, logits: Option<Var>, gold: &[usize], mask: &[bool]) -> Result<Var> {
    let Some(logits) = logits else {
        if !gold.is_empty() {
            return Err(Error::Shape(format!("{} gold tags for an empty sentence", gold.len())));
        }
        return Ok(g.input(Tensor::scalar(0.0)));
    };
    let rows = g.value(logits).rows();
    if gold.len() != rows || mask.len() != rows {
        return Err(Error::Shape(format!(
            "{rows} logit rows, {} gold tags, {} mask entries",
            gold.len(),
            mask.len()
        )));
    }
    let lp = g.log_softmax(logits)?;
    g.nll_loss(lp, gold, mask)
}

/// Binary cross-entropy of `sigmoid(logit)` against event presence `y`.
pub fn sep_loss(g: &mut Graph, logit: Var, y: u8) -> Result<Var> {
    if y > 1 {
        return Err(Error::Validation(format!("event flag must be 0 or 1, got {y}")));
    }
    g.bce_with_logits(logit, f64::from(y))
}

#[derive(Debug, Clone)]
pub struct JointLoss {
    pub total: Var,
    pub token_losses: Vec<Var>,
    /// Computed for every sentence even when `sep_weight` is zero.
    pub sep_losses: Vec<Var>,
}

/// `Σ_sentences (token_loss + sep_weight · sep_loss)`.
///
/// The event-presence head always runs forward so dropout draws are the
/// same for every weight; with `sep_weight == 0` its loss is left off the
/// tape entirely, so nothing flows back into that head.
pub fn joint_loss(
    g: &mut Graph,
    model: &TriggerModel,
    bound: &BoundModel,
    batch: &Batch,
    sep_weight: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<JointLoss> {
    if batch.is_empty() {
        return Err(Error::Contract("joint loss over an empty batch".into()));
    }
    if !sep_weight.is_finite() {
        return Err(Error::Config(format!("sep weight {sep_weight} is not finite")));
    }
    batch.check_event_flags()?;
    let mut token_losses = Vec::with_capacity(batch.len());
    let mut sep_losses = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let out = model.forward_sentence(g, bound, &batch.token_ids[i], &batch.pad_mask[i], reborrow(&mut rng))?;
        token_losses.push(token_loss(g, out.token_logits, &batch.gold_tags[i], &batch.pad_mask[i])?);
        sep_losses.push(sep_loss(g, out.sep_logit, batch.y[i])?);
    }
    let mut total = token_losses[0];
    for &t in &token_losses[1..] {
        total = g.add(total, t)?;
    }
    if sep_weight != 0.0 {
        for &s in &sep_losses {
            let term = if sep_weight == 1.0 { s } else { g.scale(s, sep_weight) };
            total = g.add(total, term)?;
        }
    }
    Ok(JointLoss {
        total,
        token_losses,
        sep_losses,
    })
}
