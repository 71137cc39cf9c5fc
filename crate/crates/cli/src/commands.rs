use std::io::Write;
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use trigtag::corpus::{generate_synthetic, load_corpus, read_file, read_sentences, write_sentences, Sentence, Split, SynthSpec};
use trigtag::gradcheck::{check_model, tiny_setup, GradCheckConfig, GradFault};
use trigtag::harness::{ablate, predict_sentences, sweep, Profile, TrainConfig};
use trigtag::metrics::{compare_runs, score_triggers, EvalReport};
use trigtag::{Error, Result, TriggerModel};

use crate::args::{
    CompareArgs, GradcheckArgs, PredictArgs, ProfileArg, ScoreArgs, SplitArg, Switch, SynthArgs, TrainArgs,
};

fn echo_config(config: &impl Serialize) -> Result<()> {
    eprintln!("resolved config: {}", serde_json::to_string(config)?);
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        }),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(None, &text)
}

fn split_filter(split: SplitArg) -> Option<Split> {
    match split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Dev => Some(Split::Dev),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    }
}

fn read_split(path: &Path, split: SplitArg) -> Result<Vec<Sentence>> {
    let mut sentences = read_sentences(&read_file(path)?)?;
    if let Some(s) = split_filter(split) {
        sentences.retain(|x| x.split == s);
    }
    Ok(sentences)
}

pub fn synth(args: SynthArgs) -> Result<u8> {
    let mut spec = SynthSpec::default();
    if let Some(n) = args.sentences {
        spec.train = n * 8 / 10;
        spec.dev = n / 10;
        spec.test = n - spec.train - spec.dev;
    }
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut spec.train, args.train);
    set(&mut spec.dev, args.dev);
    set(&mut spec.test, args.test);
    set(&mut spec.filler_vocab, args.filler);
    set(&mut spec.min_len, args.min_len);
    set(&mut spec.max_len, args.max_len);
    set(&mut spec.max_triggers, args.max_triggers);
    set(&mut spec.sentences_per_doc, args.sentences_per_doc);
    if let Some(f) = args.event_frac {
        spec.event_fraction = f;
    }
    if let Some(f) = args.multiword_frac {
        spec.multiword_fraction = f;
    }
    if let Some(t) = args.types {
        spec.lexicon = SynthSpec::default_lexicon(t)?;
    }
    spec.validate()?;
    echo_config(&serde_json::json!({ "seed": args.seed, "spec": &spec }))?;
    let corpus = generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    emit(args.out.as_deref(), &corpus.to_jsonl()?)?;
    Ok(0)
}

fn resolve_train_config(args: &TrainArgs) -> TrainConfig {
    let mut cfg = TrainConfig::for_profile(match args.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    });
    if let Some(s) = args.sep {
        cfg.sep_weight = if s == Switch::On { 1.0 } else { 0.0 };
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = &args.lrs {
        cfg.learning_rates = v.clone();
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout_p = v;
    }
    if let Some(v) = args.d_model {
        cfg.encoder.d_model = v;
    }
    if let Some(v) = args.heads {
        cfg.encoder.n_heads = v;
    }
    if let Some(v) = args.layers {
        cfg.encoder.n_layers = v;
    }
    if let Some(v) = args.d_ff {
        cfg.encoder.d_ff = v;
    }
    if let Some(v) = args.max_len {
        cfg.encoder.max_len = v;
    }
    if let Some(v) = args.min_count {
        cfg.vocab_min_count = v;
    }
    if args.grad_clip.is_some() {
        cfg.grad_clip = args.grad_clip;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    cfg
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    run_dir: String,
    sep_weight: f64,
    selected_seed: u64,
    selected_lr: f64,
    best_epoch: usize,
    best_dev_f1: f64,
    sep_head_grad_max_abs: f64,
    test: Option<&'a EvalReport>,
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let cfg = resolve_train_config(&args);
    cfg.validate()?;
    echo_config(&serde_json::json!({ "ablate": args.ablate, "train": &cfg }))?;
    let corpus = load_corpus(&args.corpus)?;
    info!(
        "corpus: {} train, {} dev, {} test sentences, {} trigger types",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        corpus.label_set.num_types()
    );
    let dir = args.out.join(&args.name);
    if args.ablate {
        let result = ablate(&corpus, &cfg, 0.0, 1.0, Some(&dir))?;
        print_json(&result)?;
    } else {
        let result = sweep(&corpus, &cfg, Some(&dir))?;
        let best = result.best();
        print_json(&SweepOutput {
            run_dir: dir.join(trigtag::harness::run_dir_name(best.seed, best.lr)).display().to_string(),
            sep_weight: result.sep_weight,
            selected_seed: best.seed,
            selected_lr: best.lr,
            best_epoch: best.best_epoch,
            best_dev_f1: best.best_dev_f1,
            sep_head_grad_max_abs: best.epochs.iter().map(|e| e.sep_head_grad_max_abs).fold(0.0, f64::max),
            test: best.test.as_ref(),
        })?;
    }
    Ok(0)
}

pub fn predict(args: PredictArgs) -> Result<u8> {
    echo_config(&serde_json::json!({
        "checkpoint": args.checkpoint,
        "corpus": args.corpus,
        "split": format!("{:?}", args.split).to_lowercase(),
        "threshold": args.threshold,
    }))?;
    let model = TriggerModel::load(&args.checkpoint)?;
    let sentences = read_split(&args.corpus, args.split)?;
    for s in &sentences {
        if let Some(t) = s.triggers.iter().find(|t| !model.labels().contains(&t.label)) {
            return Err(Error::Checkpoint(format!(
                "corpus label '{}' ({}/{}) is not in the checkpoint's label set",
                t.label, s.doc_id, s.sent_id
            )));
        }
    }
    let predictions = predict_sentences(&model, &sentences, args.threshold)?;
    emit(args.out.as_deref(), &write_sentences(&predictions)?)?;
    Ok(0)
}

pub fn score(args: ScoreArgs) -> Result<u8> {
    let pred = read_split(&args.pred, SplitArg::All)?;
    let gold = read_split(&args.gold, args.split)?;
    let report = score_triggers(&pred, &gold)?;
    if args.table {
        emit(None, &format!("system\tP\tR\tF1\n{}\n", report.table_row(&args.name)))?;
    } else {
        print_json(&report)?;
    }
    Ok(0)
}

fn read_report(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

pub fn compare(args: CompareArgs) -> Result<u8> {
    let diff = compare_runs(&read_report(&args.a)?, &read_report(&args.b)?)?;
    print_json(&diff)?;
    Ok(0)
}

fn parse_fault(spec: &str) -> Result<GradFault> {
    let bad = || Error::Config(format!("fault '{spec}' is not PARAM:INDEX:DELTA"));
    let mut parts = spec.rsplitn(3, ':');
    let delta = parts.next().and_then(|d| d.parse().ok()).ok_or_else(bad)?;
    let index = parts.next().and_then(|i| i.parse().ok()).ok_or_else(bad)?;
    let param = parts.next().ok_or_else(bad)?.to_owned();
    Ok(GradFault { param, index, delta })
}

pub fn gradcheck(args: GradcheckArgs) -> Result<u8> {
    if !(args.tolerance.is_finite() && args.tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance {} must be positive", args.tolerance)));
    }
    let fault = args.inject_fault.as_deref().map(parse_fault).transpose()?;
    let sep_weight = if args.sep == Switch::On { 1.0 } else { 0.0 };
    echo_config(&serde_json::json!({
        "seed": args.seed,
        "tolerance": args.tolerance,
        "d_model": args.d_model,
        "layers": args.layers,
        "heads": args.heads,
        "sep_weight": sep_weight,
    }))?;
    let (mut model, batch) = tiny_setup(args.seed, args.d_model, args.layers, args.heads)?;
    let cfg = GradCheckConfig {
        tolerance: args.tolerance,
        ..GradCheckConfig::default()
    };
    let report = check_model(&mut model, &batch, sep_weight, Some(args.seed), cfg, fault.as_ref())?;
    print_json(&report)?;
    if report.passed {
        Ok(0)
    } else {
        eprintln!(
            "gradient check failed: worst parameter {} (index {}, relative error {:.3e})",
            report.worst.name, report.worst.worst_index, report.worst.max_rel_error
        );
        Ok(1)
    }
}
