//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Graph, ParamStore};
use crate::corpus::{make_batches, Batch, Sentence, Split, Vocab};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::tagging::{joint_loss, LabelSet, TriggerModel, TriggerSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor: `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-3,
            floor: 1e-6,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub values: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub config: GradCheckConfig,
    pub values_checked: usize,
    pub params: Vec<ParamCheck>,
    pub worst: ParamCheck,
    pub passed: bool,
}

/// Perturbation applied to one analytic gradient entry before comparison.
/// Exists so the checker itself can be shown to fail.
#[derive(Debug, Clone, PartialEq)]
pub struct GradFault {
    pub param: String,
    pub index: usize,
    pub delta: f64,
}

/// Compares the gradients currently stored in `store` with central
/// differences of `loss`, over every value of every trainable parameter.
pub fn check_store(
    store: &mut ParamStore,
    cfg: GradCheckConfig,
    mut loss: impl FnMut(&ParamStore) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut params = Vec::new();
    let mut values_checked = 0;
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let n = store.get(id).value.numel();
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            values: n,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..n {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + cfg.step;
            let plus = loss(store);
            store.get_mut(id).value.data_mut()[k] = orig - cfg.step;
            let minus = loss(store);
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * cfg.step);
            let analytic = store.get(id).grad[k];
            let rel = relative_error(analytic, numeric, cfg.floor);
            if rel > check.max_rel_error || k == 0 {
                check.max_rel_error = rel;
                check.worst_index = k;
                check.analytic = analytic;
                check.numeric = numeric;
            }
            values_checked += 1;
        }
        params.push(check);
    }
    let worst = params
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .cloned()
        .ok_or_else(|| Error::Contract("no trainable parameters to check".into()))?;
    Ok(GradCheckReport {
        config: cfg,
        values_checked,
        passed: worst.max_rel_error <= cfg.tolerance,
        params,
        worst,
    })
}

/// Full-model check of the joint loss on one batch. Dropout masks are
/// regenerated from `dropout_seed` for every evaluation, so they are
/// identical across perturbations.
pub fn check_model(
    model: &mut TriggerModel,
    batch: &Batch,
    sep_weight: f64,
    dropout_seed: Option<u64>,
    cfg: GradCheckConfig,
    fault: Option<&GradFault>,
) -> Result<GradCheckReport> {
    let eval = |m: &TriggerModel, store: &ParamStore, backward: bool| -> Result<(f64, Option<ParamStore>)> {
        let mut g = Graph::new();
        let bound = m.bind(&mut g);
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let loss = joint_loss(&mut g, m, &bound, batch, sep_weight, rng.as_mut())?;
        let value = g.value(loss.total).item();
        if backward {
            let mut s = store.clone();
            s.zero_grad();
            g.backward(loss.total, &mut s)?;
            return Ok((value, Some(s)));
        }
        Ok((value, None))
    };
    let (_, grads) = eval(model, &model.store, true)?;
    model.store = grads.expect("backward requested");
    if let Some(f) = fault {
        let id = model
            .store
            .id(&f.param)
            .ok_or_else(|| Error::Config(format!("no parameter named '{}'", f.param)))?;
        let p = model.store.get_mut(id);
        let slot = p
            .grad
            .get_mut(f.index)
            .ok_or_else(|| Error::Config(format!("'{}' has no index {}", f.param, f.index)))?;
        *slot += f.delta;
    }
    let mut store = model.store.clone();
    let mut probe = model.clone();
    let report = check_store(&mut store, cfg, |s| {
        probe.store.clone_from(s);
        eval(&probe, s, false).map(|(v, _)| v)
    })?;
    Ok(report)
}

/// Random tiny model plus a two-sentence batch (one with a multi-word
/// trigger, one event-free) for gradient checks.
pub fn tiny_setup(seed: u64, d_model: usize, n_layers: usize, n_heads: usize) -> Result<(TriggerModel, Batch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..8).map(|i| format!("tok{i}")).collect();
    let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n).map(|_| words[rng.random_range(0..words.len())].clone()).collect()
    };
    let sentences = vec![
        Sentence::new(
            "g",
            "g-0",
            Split::Train,
            pick(&mut rng, 5),
            vec![TriggerSpan::new(1, 3, "Conflict.Attack"), TriggerSpan::new(4, 5, "Life.Die")],
        ),
        Sentence::new("g", "g-1", Split::Train, pick(&mut rng, 3), vec![]),
    ];
    let vocab = Vocab::build(&sentences, 1)?;
    let labels = LabelSet::new(vec!["Conflict.Attack".into(), "Life.Die".into()])?;
    let config = EncoderConfig {
        vocab_size: vocab.len(),
        d_model,
        n_heads,
        n_layers,
        d_ff: 2 * d_model,
        max_len: 8,
        dropout_p: 0.1,
    };
    let mut model = TriggerModel::new(config, labels.clone(), vocab.clone(), &mut rng)?;
    // break the zero-bias symmetry so every gradient path is exercised
    for p in model.store.iter_mut() {
        if p.name.ends_with("bias") || p.name.contains(".b") || p.name.contains("beta") {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let batch = make_batches::<ChaCha8Rng>(&sentences, &vocab, &labels, 2, 8, None)?.remove(0);
    Ok((model, batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
        assert!((relative_error(1.0, 1.001, 1e-6) - 0.001 / 1.001).abs() < 1e-12);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn small_model_passes_and_fault_is_caught() {
        let (mut model, batch) = tiny_setup(3, 8, 1, 2).unwrap();
        let cfg = GradCheckConfig::default();
        let report = check_model(&mut model, &batch, 1.0, Some(11), cfg, None).unwrap();
        assert!(report.passed, "{:?}", report.worst);
        let fault = GradFault {
            param: "token_head.bias".into(),
            index: 0,
            delta: 0.5,
        };
        let report = check_model(&mut model, &batch, 1.0, Some(11), cfg, Some(&fault)).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst.name, "token_head.bias");
    }
}
