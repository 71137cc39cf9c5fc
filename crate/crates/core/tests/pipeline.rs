use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trigtag::corpus::{generate_synthetic, parse_corpus, read_sentences, write_sentences};
use trigtag::harness::{predict_sentences, sweep, EncoderDims, TrainConfig};
use trigtag::metrics::{compare_runs, score_triggers};
use trigtag::{SynthSpec, TriggerModel};

fn config() -> TrainConfig {
    TrainConfig {
        epochs: 8,
        seeds: vec![0, 1],
        learning_rates: vec![1e-2],
        batch_size: 4,
        encoder: EncoderDims {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            max_len: 16,
        },
        ..TrainConfig::desk()
    }
}

#[test]
fn synth_train_predict_score() {
    let spec = SynthSpec {
        filler_vocab: 30,
        train: 40,
        dev: 10,
        test: 10,
        event_fraction: 0.5,
        lexicon: SynthSpec::default_lexicon(3).unwrap(),
        max_len: 10,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let corpus = parse_corpus(&corpus.to_jsonl().unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = sweep(&corpus, &config(), Some(dir.path())).unwrap();
    let best = result.best();
    assert!(best.best_dev_f1 > 0.5, "dev f1 {}", best.best_dev_f1);

    let ckpt = dir.path().join(trigtag::harness::run_dir_name(best.seed, best.lr)).join("checkpoint.json");
    let model = TriggerModel::load(&ckpt).unwrap();
    let preds = predict_sentences(&model, &corpus.test, 0.5).unwrap();
    let reread = read_sentences(&write_sentences(&preds).unwrap()).unwrap();
    assert_eq!(reread, preds);
    let report = score_triggers(&reread, &corpus.test).unwrap();
    assert_eq!(Some(&report), best.test.as_ref());
    assert_eq!(report.tp + report.fp, preds.iter().map(|s| s.triggers.len()).sum::<usize>());
    assert_eq!(report.tp + report.fn_, corpus.test.iter().map(|s| s.triggers.len()).sum::<usize>());

    let other = &result.runs[1 - result.selected];
    let diff = compare_runs(other.final_report(), &report).unwrap();
    assert_eq!(diff.f1_delta, other.final_report().f1 - report.f1);
}
