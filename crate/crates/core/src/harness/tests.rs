use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{generate_synthetic, SynthSpec};

fn tiny_corpus() -> Corpus {
    let spec = SynthSpec {
        filler_vocab: 20,
        train: 16,
        dev: 6,
        test: 6,
        lexicon: SynthSpec::default_lexicon(2).unwrap(),
        min_len: 4,
        max_len: 8,
        sentences_per_doc: 2,
        ..SynthSpec::default()
    };
    generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
}

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seeds: vec![0],
        learning_rates: vec![3e-3],
        batch_size: 4,
        encoder: EncoderDims {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            max_len: 16,
        },
        ..TrainConfig::desk()
    }
}

fn initial_model(corpus: &Corpus, cfg: &TrainConfig, seed: u64) -> TriggerModel {
    let vocab = Vocab::build(&corpus.train, cfg.vocab_min_count).unwrap();
    let enc = cfg.encoder_config(vocab.len());
    TriggerModel::new(enc, corpus.label_set.clone(), vocab, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn frozen_run_keeps_parameters_and_baseline() {
    let corpus = tiny_corpus();
    let cfg = tiny_config(1);
    let run = train(&corpus, &cfg, 4, 0.0, 1.0, None).unwrap();
    let init = initial_model(&corpus, &cfg, 4);
    for ((_, a), (_, b)) in run.model.store.iter().zip(init.store.iter()) {
        assert_eq!(a.value, b.value, "{}", a.name);
    }
    let baseline = evaluate(&init, &corpus.dev, 0.5).unwrap();
    assert_eq!(run.epochs[0].dev, baseline);
}

#[test]
fn same_seed_same_run() {
    let corpus = tiny_corpus();
    let cfg = tiny_config(3);
    let a = train(&corpus, &cfg, 1, 3e-3, 1.0, None).unwrap();
    let b = train(&corpus, &cfg, 1, 3e-3, 1.0, None).unwrap();
    assert_eq!(a.train_losses(), b.train_losses());
    assert_eq!(a.model.checkpoint_json().unwrap(), b.model.checkpoint_json().unwrap());
    let c = train(&corpus, &cfg, 2, 3e-3, 1.0, None).unwrap();
    assert_ne!(a.train_losses(), c.train_losses());
}

#[test]
fn training_lowers_the_loss() {
    let corpus = tiny_corpus();
    let run = train(&corpus, &tiny_config(15), 0, 1e-2, 1.0, None).unwrap();
    let losses = run.train_losses();
    assert!(losses[14] < 0.5 * losses[0], "{losses:?}");
}

#[test]
fn sep_off_leaves_sep_head_without_gradient() {
    let corpus = tiny_corpus();
    let cfg = tiny_config(2);
    let off = train(&corpus, &cfg, 0, 3e-3, 0.0, None).unwrap();
    assert!(off.epochs.iter().all(|e| e.sep_head_grad_max_abs == 0.0));
    assert!(off.epochs.iter().all(|e| e.token_head_grad_max_abs > 0.0));
    let init = initial_model(&corpus, &cfg, 0);
    let sep_params = |m: &TriggerModel| {
        m.store
            .iter()
            .filter(|(_, p)| p.name.starts_with(crate::tagging::SEP_HEAD_PREFIX))
            .map(|(_, p)| p.value.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(sep_params(&off.model), sep_params(&init));
    let on = train(&corpus, &cfg, 0, 3e-3, 1.0, None).unwrap();
    assert!(on.epochs.iter().all(|e| e.sep_head_grad_max_abs > 0.0));
}

#[test]
fn best_epoch_bookkeeping_and_test_from_best() {
    let corpus = tiny_corpus();
    let run = train(&corpus, &tiny_config(6), 3, 1e-2, 1.0, None).unwrap();
    let max = run.epochs.iter().map(|e| e.dev.f1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(run.best_dev_f1, max);
    let first = run.epochs.iter().position(|e| e.dev.f1 == max).unwrap() + 1;
    assert_eq!(run.best_epoch, first);
    assert_eq!(run.best().dev, evaluate(&run.model, &corpus.dev, 0.5).unwrap());
    assert_eq!(run.test.as_ref().unwrap(), &evaluate(&run.model, &corpus.test, 0.5).unwrap());
}

#[test]
fn divergence_is_reported_with_position() {
    let corpus = tiny_corpus();
    let err = train(&corpus, &tiny_config(3), 0, 1e300, 1.0, None).unwrap_err();
    match err {
        Error::Divergence { epoch, batch, loss } => {
            assert!(epoch >= 1 && batch >= 1);
            assert!(!loss.is_finite());
        }
        other => panic!("expected divergence, got {other}"),
    }
}

#[test]
fn config_validation() {
    let cfg = TrainConfig {
        sep_weight: 0.5,
        ..TrainConfig::desk()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let cfg = TrainConfig {
        seeds: vec![],
        ..TrainConfig::desk()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let cfg = TrainConfig {
        learning_rates: vec![-1e-3],
        ..TrainConfig::desk()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let corpus = tiny_corpus();
    let err = train(&corpus, &tiny_config(1), 0, f64::NAN, 1.0, None).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn profiles() {
    let p = TrainConfig::paper();
    assert_eq!(p.epochs, 20);
    assert_eq!(p.seeds.len(), 5);
    assert_eq!(p.learning_rates, vec![3e-5, 5e-5]);
    assert_eq!(p.batch_size, 30);
    assert_eq!(p.dropout_p, 0.3);
    let d = TrainConfig::desk();
    assert_eq!((d.epochs, d.batch_size), (50, 8));
    assert_eq!(d.seeds, vec![0, 1, 2, 3, 4]);
    assert_eq!(d.learning_rates, vec![1e-3, 3e-3]);
    assert!(p.validate().is_ok() && d.validate().is_ok());
}

#[test]
fn single_pair_sweep_equals_train() {
    let corpus = tiny_corpus();
    let cfg = tiny_config(2);
    let s = sweep(&corpus, &cfg, None).unwrap();
    let t = train(&corpus, &cfg, 0, 3e-3, 1.0, None).unwrap();
    assert_eq!(s.runs.len(), 1);
    assert_eq!(s.best().train_losses(), t.train_losses());
    assert_eq!(s.best().test, t.test);
}

#[test]
fn sweep_covers_grid_and_selects_by_dev() {
    let corpus = tiny_corpus();
    let cfg = TrainConfig {
        seeds: vec![2, 0],
        learning_rates: vec![1e-2, 1e-3],
        ..tiny_config(2)
    };
    let s = sweep(&corpus, &cfg, None).unwrap();
    assert_eq!(s.runs.len(), 4);
    let best = s.best();
    for r in &s.runs {
        assert!(r.best_dev_f1 <= best.best_dev_f1);
        if r.best_dev_f1 == best.best_dev_f1 {
            assert!((best.seed, best.lr) <= (r.seed, r.lr));
        }
    }
}

#[test]
fn selection_tie_break() {
    let corpus = tiny_corpus();
    let cfg = tiny_config(1);
    let model = initial_model(&corpus, &cfg, 0);
    let rec = |seed, lr, f1| RunRecord {
        seed,
        lr,
        sep_weight: 1.0,
        epochs: vec![],
        best_epoch: 1,
        best_dev_f1: f1,
        test: None,
        checkpoint: None,
        model: model.clone(),
    };
    let runs = vec![rec(3, 1e-3, 0.5), rec(1, 3e-3, 0.7), rec(1, 1e-3, 0.7), rec(0, 1e-3, 0.6)];
    assert_eq!(select_run(&runs), Some(2));
    assert_eq!(select_run(&runs[..1]), Some(0));
    assert_eq!(select_run(&[]), None);
}

#[test]
fn equal_arms_give_zero_deltas() {
    let corpus = tiny_corpus();
    let cfg = TrainConfig {
        seeds: vec![0, 1],
        ..tiny_config(2)
    };
    let a = ablate(&corpus, &cfg, 1.0, 1.0, None).unwrap();
    assert_eq!(a.pairs.len(), 2);
    for p in &a.pairs {
        assert_eq!((p.f1_delta, p.precision_delta, p.fp_delta), (0.0, 0.0, 0));
        assert!(matches!(p.sentence_event_accuracy_delta, None | Some(0.0)));
    }
    assert_eq!(a.comparison.f1_delta, 0.0);
    assert_eq!(a.std_mean, a.sep_mean);
}

#[test]
fn ablation_pairs_by_seed_and_lr() {
    let corpus = tiny_corpus();
    let cfg = TrainConfig {
        seeds: vec![0, 1],
        ..tiny_config(2)
    };
    let a = ablate(&corpus, &cfg, 0.0, 1.0, None).unwrap();
    let keys: Vec<_> = a.pairs.iter().map(|p| (p.seed, p.lr)).collect();
    assert_eq!(keys, vec![(0, 3e-3), (1, 3e-3)]);
    for (p, (s, t)) in a.pairs.iter().zip(a.std.runs.iter().zip(&a.sep.runs)) {
        assert_eq!((s.sep_weight, t.sep_weight), (0.0, 1.0));
        assert_eq!(p.fp_delta, t.final_report().fp as i64 - s.final_report().fp as i64);
    }
}

#[test]
fn run_directory_layout_and_reproducibility() {
    let corpus = tiny_corpus();
    let cfg = tiny_config(2);
    let read = |root: &Path| -> Vec<(String, String)> {
        let mut out = Vec::new();
        for name in ["sweep.json", "0_3e-3/config.json", "0_3e-3/metrics.jsonl", "0_3e-3/checkpoint.json", "0_3e-3/report.json"] {
            out.push((name.to_owned(), std::fs::read_to_string(root.join(name)).unwrap()));
        }
        out
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    sweep(&corpus, &cfg, Some(a.path())).unwrap();
    sweep(&corpus, &cfg, Some(b.path())).unwrap();
    let (fa, fb) = (read(a.path()), read(b.path()));
    assert_eq!(fa, fb);
    assert_eq!(fa[2].1.lines().count(), 2);
    let loaded = TriggerModel::load(&a.path().join("0_3e-3/checkpoint.json")).unwrap();
    let direct = train(&corpus, &cfg, 0, 3e-3, 1.0, None).unwrap();
    assert_eq!(loaded.checkpoint_json().unwrap(), direct.model.checkpoint_json().unwrap());
}

#[test]
fn observer_sees_every_epoch_and_can_stop() {
    let corpus = tiny_corpus();
    let mut seen = Vec::new();
    let run = train_observed(&corpus, &tiny_config(5), 0, 3e-3, 1.0, None, |e, _| {
        seen.push(e.epoch);
        Ok(e.epoch < 3)
    })
    .unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    assert_eq!(run.epochs.len(), 3);
}
