use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trigtag::autodiff::Graph;
use trigtag::corpus::{generate_synthetic, make_batches, SynthSpec, Vocab};
use trigtag::metrics::score_triggers;
use trigtag::tagging::{decode_iob2, encode_iob2, joint_loss, TriggerModel};
use trigtag::EncoderConfig;

fn training_step(c: &mut Criterion) {
    let corpus = generate_synthetic(&SynthSpec::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let vocab = Vocab::build(&corpus.train, 1).unwrap();
    let config = EncoderConfig::desk(vocab.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = TriggerModel::new(config, corpus.label_set.clone(), vocab.clone(), &mut rng).unwrap();
    let batch = make_batches::<ChaCha8Rng>(&corpus.train, &vocab, &corpus.label_set, 8, 64, None)
        .unwrap()
        .remove(0);

    c.bench_function("forward_batch8_desk", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let l = joint_loss(&mut g, &model, &bound, &batch, 1.0, Some(&mut rng)).unwrap();
            black_box(g.value(l.total).item())
        })
    });
    c.bench_function("forward_backward_batch8_desk", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let l = joint_loss(&mut g, &model, &bound, &batch, 1.0, Some(&mut rng)).unwrap();
            model.store.zero_grad();
            black_box(g.backward(l.total, &mut model.store).unwrap())
        })
    });
    c.bench_function("predict_sentence_desk", |b| {
        let tokens = &corpus.dev[0].tokens;
        b.iter(|| black_box(model.predict(tokens, 0.5).unwrap()))
    });
}

fn codec(c: &mut Criterion) {
    let corpus = generate_synthetic(&SynthSpec::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let labels = &corpus.label_set;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let random_tags: Vec<Vec<usize>> = (0..1000)
        .map(|_| (0..16).map(|_| rng.random_range(0..labels.num_tags())).collect())
        .collect();
    c.bench_function("iob2_encode_corpus", |b| {
        b.iter(|| {
            for s in &corpus.train {
                black_box(encode_iob2(labels, s.tokens.len(), &s.triggers).unwrap());
            }
        })
    });
    c.bench_function("iob2_decode_random_1000", |b| {
        b.iter(|| {
            for tags in &random_tags {
                black_box(decode_iob2(labels, tags).unwrap());
            }
        })
    });
}

fn scorer(c: &mut Criterion) {
    let spec = SynthSpec {
        train: 5000,
        ..SynthSpec::default()
    };
    let gold = generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap().train;
    let mut pred = gold.clone();
    pred.rotate_left(7);
    for s in pred.iter_mut().step_by(3) {
        s.triggers.clear();
    }
    c.bench_function("score_5000_sentences", |b| b.iter(|| black_box(score_triggers(&pred, &gold).unwrap())));
}

criterion_group!(benches, training_step, codec, scorer);
criterion_main!(benches);
