//! Training loop, (seed, lr) sweeps with dev-based selection, and the
//! paired with/without event-presence-loss experiment.
//!
//! Run directories follow `<out>/<seed>_<lr>/` with `config.json`,
//! `metrics.jsonl` (one line per epoch), `checkpoint.json` (best dev F1)
//! and `report.json`.

mod config;

use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{EncoderDims, Profile, TrainConfig, SELECTION_METRIC};

use crate::autodiff::{Adam, AdamConfig, Graph};
use crate::corpus::{make_batches, Corpus, Sentence, Vocab};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::metrics::{compare_runs, score_triggers, EvalReport, RunComparison};
use crate::tagging::{joint_loss, TriggerModel};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Copies of `sentences` whose triggers are the model's predictions,
/// marked `pred: true` and carrying the event probability.
pub fn predict_sentences(model: &TriggerModel, sentences: &[Sentence], threshold: f64) -> Result<Vec<Sentence>> {
    sentences
        .iter()
        .map(|s| {
            let p = model.predict(&s.tokens, threshold)?;
            Ok(Sentence {
                triggers: p.spans,
                pred: Some(true),
                event_probability: Some(p.event_probability),
                ..s.clone()
            })
        })
        .collect()
}

pub fn evaluate(model: &TriggerModel, gold: &[Sentence], threshold: f64) -> Result<EvalReport> {
    score_triggers(&predict_sentences(model, gold, threshold)?, gold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed joint loss over the epoch's batches.
    pub train_loss: f64,
    /// Largest |gradient| seen on the event-presence head during the epoch.
    pub sep_head_grad_max_abs: f64,
    pub token_head_grad_max_abs: f64,
    pub dev: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub lr: f64,
    pub sep_weight: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based; earliest epoch on ties.
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    /// Test report of the best-dev checkpoint; absent for an empty test split.
    pub test: Option<EvalReport>,
    pub checkpoint: Option<PathBuf>,
    #[serde(skip)]
    pub model: TriggerModel,
}

impl RunRecord {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// Test report when there is one, otherwise the best dev report.
    pub fn final_report(&self) -> &EvalReport {
        self.test.as_ref().unwrap_or(&self.best().dev)
    }
}

#[derive(Serialize)]
struct RunConfigFile<'a> {
    train: &'a TrainConfig,
    seed: u64,
    lr: f64,
    sep_weight: f64,
    encoder: &'a EncoderConfig,
    train_sentences: usize,
    dev_sentences: usize,
    test_sentences: usize,
}

pub fn run_dir_name(seed: u64, lr: f64) -> String {
    format!("{seed}_{lr:e}")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// One training run. Everything random derives from `seed`: parameter
/// init, batch shuffling and dropout use separate ChaCha streams.
pub fn train(
    corpus: &Corpus,
    cfg: &TrainConfig,
    seed: u64,
    lr: f64,
    sep_weight: f64,
    out_dir: Option<&Path>,
) -> Result<RunRecord> {
    train_observed(corpus, cfg, seed, lr, sep_weight, out_dir, |_, _| Ok(true))
}

/// [`train`] with a callback after every epoch, seeing the current (not
/// the best) model. Returning `false` ends training after that epoch.
pub fn train_observed(
    corpus: &Corpus,
    cfg: &TrainConfig,
    seed: u64,
    lr: f64,
    sep_weight: f64,
    out_dir: Option<&Path>,
    mut observe: impl FnMut(&EpochRecord, &TriggerModel) -> Result<bool>,
) -> Result<RunRecord> {
    cfg.validate()?;
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Config(format!("learning rate {lr} must be finite and non-negative")));
    }
    if corpus.train.is_empty() || corpus.dev.is_empty() {
        return Err(Error::Validation("training needs non-empty train and dev splits".into()));
    }
    let vocab = Vocab::build(&corpus.train, cfg.vocab_min_count)?;
    let enc = cfg.encoder_config(vocab.len());
    let labels = corpus.label_set.clone();

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut model = TriggerModel::new(enc.clone(), labels.clone(), vocab.clone(), &mut init_rng)?;
    // lr == 0 is a frozen run: gradients are still computed, nothing moves
    let mut adam = if lr > 0.0 {
        Some(Adam::new(AdamConfig::with_lr(lr), &model.store)?.with_clip_norm(cfg.grad_clip)?)
    } else {
        None
    };

    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_json(
            &dir.join("config.json"),
            &RunConfigFile {
                train: cfg,
                seed,
                lr,
                sep_weight,
                encoder: &enc,
                train_sentences: corpus.train.len(),
                dev_sentences: corpus.dev.len(),
                test_sentences: corpus.test.len(),
            },
        )?;
    }

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best_store = model.store.clone();
    let mut best_epoch = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut metrics_lines = String::new();
    for epoch in 1..=cfg.epochs {
        let batches = make_batches(&corpus.train, &vocab, &labels, cfg.batch_size, enc.max_len, Some(&mut shuffle_rng))?;
        let mut train_loss = 0.0;
        let mut sep_grad: f64 = 0.0;
        let mut token_grad: f64 = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let diverged = |loss| Error::Divergence {
                epoch,
                batch: b + 1,
                loss,
            };
            let loss = match joint_loss(&mut g, &model, &bound, batch, sep_weight, Some(&mut dropout_rng)) {
                Err(Error::Numeric(_)) => return Err(diverged(f64::NAN)),
                other => other?,
            };
            let value = g.value(loss.total).item();
            if !value.is_finite() {
                return Err(diverged(value));
            }
            train_loss += value;
            model.store.zero_grad();
            g.backward(loss.total, &mut model.store)?;
            sep_grad = sep_grad.max(model.sep_head_max_abs_grad());
            token_grad = token_grad.max(model.token_head_max_abs_grad());
            if let Some(opt) = adam.as_mut() {
                opt.step(&mut model.store);
            }
        }
        let dev = evaluate(&model, &corpus.dev, cfg.threshold)?;
        debug!(
            "seed {seed} lr {lr} epoch {epoch}: loss {train_loss:.4} dev f1 {:.4}",
            dev.f1
        );
        if dev.f1 > best_f1 {
            best_f1 = dev.f1;
            best_epoch = epoch;
            best_store.clone_from(&model.store);
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            sep_head_grad_max_abs: sep_grad,
            token_head_grad_max_abs: token_grad,
            dev,
        };
        metrics_lines.push_str(&serde_json::to_string(&record)?);
        metrics_lines.push('\n');
        let go_on = observe(&record, &model)?;
        epochs.push(record);
        if !go_on {
            break;
        }
    }

    model.store = best_store;
    let test = if corpus.test.is_empty() {
        None
    } else {
        Some(evaluate(&model, &corpus.test, cfg.threshold)?)
    };
    info!(
        "seed {seed} lr {lr} sep {sep_weight}: best epoch {best_epoch}, dev f1 {best_f1:.4}, test f1 {}",
        test.as_ref().map_or("-".to_owned(), |t| format!("{:.4}", t.f1))
    );

    let mut checkpoint = None;
    if let Some(dir) = out_dir {
        let path = dir.join("metrics.jsonl");
        std::fs::write(&path, &metrics_lines).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("checkpoint.json");
        model.save(&path)?;
        checkpoint = Some(PathBuf::from("checkpoint.json"));
    }
    let record = RunRecord {
        seed,
        lr,
        sep_weight,
        epochs,
        best_epoch,
        best_dev_f1: best_f1,
        test,
        checkpoint,
        model,
    };
    if let Some(dir) = out_dir {
        write_json(&dir.join("report.json"), &record)?;
    }
    Ok(record)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub sep_weight: f64,
    /// In (seed, lr) order of the configuration.
    pub runs: Vec<RunRecord>,
    /// Index into `runs` of the dev-selected run.
    pub selected: usize,
}

impl SweepResult {
    pub fn best(&self) -> &RunRecord {
        &self.runs[self.selected]
    }
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    sep_weight: f64,
    selected_seed: u64,
    selected_lr: f64,
    selected_dir: String,
    best_dev_f1: f64,
    test: Option<&'a EvalReport>,
    runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub lr: f64,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

impl SweepResult {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs
            .iter()
            .map(|r| RunSummary {
                seed: r.seed,
                lr: r.lr,
                best_epoch: r.best_epoch,
                best_dev_f1: r.best_dev_f1,
            })
            .collect()
    }
}

/// Highest dev F1; ties go to the lowest seed, then the lowest lr.
pub fn select_run(runs: &[RunRecord]) -> Option<usize> {
    (0..runs.len()).min_by(|&a, &b| {
        let (x, y) = (&runs[a], &runs[b]);
        y.best_dev_f1
            .total_cmp(&x.best_dev_f1)
            .then(x.seed.cmp(&y.seed))
            .then(x.lr.total_cmp(&y.lr))
    })
}

/// Trains every (seed, lr) pair with `cfg.sep_weight` and selects by dev F1.
pub fn sweep(corpus: &Corpus, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<SweepResult> {
    sweep_with_weight(corpus, cfg, cfg.sep_weight, out_dir)
}

fn sweep_with_weight(corpus: &Corpus, cfg: &TrainConfig, sep_weight: f64, out_dir: Option<&Path>) -> Result<SweepResult> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len() * cfg.learning_rates.len());
    for &seed in &cfg.seeds {
        for &lr in &cfg.learning_rates {
            let dir = out_dir.map(|d| d.join(run_dir_name(seed, lr)));
            runs.push(train(corpus, cfg, seed, lr, sep_weight, dir.as_deref())?);
        }
    }
    let selected = select_run(&runs).expect("validated config has at least one run");
    let result = SweepResult {
        sep_weight,
        runs,
        selected,
    };
    if let Some(dir) = out_dir {
        let best = result.best();
        write_json(
            &dir.join("sweep.json"),
            &SweepSummary {
                sep_weight,
                selected_seed: best.seed,
                selected_lr: best.lr,
                selected_dir: run_dir_name(best.seed, best.lr),
                best_dev_f1: best.best_dev_f1,
                test: best.test.as_ref(),
                runs: result.summaries(),
            },
        )?;
    }
    Ok(result)
}

/// Per-run numbers compared across the two arms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub fp: usize,
    pub sentence_event_accuracy: Option<f64>,
}

impl From<&EvalReport> for ArmMetrics {
    fn from(r: &EvalReport) -> Self {
        ArmMetrics {
            f1: r.f1,
            precision: r.precision,
            recall: r.recall,
            fp: r.fp,
            sentence_event_accuracy: r.sentence_event_accuracy.value(),
        }
    }
}

/// `sep − std` for one (seed, lr).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDelta {
    pub seed: u64,
    pub lr: f64,
    pub std: ArmMetrics,
    pub sep: ArmMetrics,
    pub f1_delta: f64,
    pub precision_delta: f64,
    pub fp_delta: i64,
    pub sentence_event_accuracy_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmMeans {
    pub fp: f64,
    pub f1: f64,
    pub precision: f64,
    /// Over runs where the metric is defined.
    pub sentence_event_accuracy: Option<f64>,
}

fn arm_means(arms: &[&ArmMetrics]) -> ArmMeans {
    let n = arms.len() as f64;
    let acc: Vec<f64> = arms.iter().filter_map(|a| a.sentence_event_accuracy).collect();
    ArmMeans {
        fp: arms.iter().map(|a| a.fp as f64).sum::<f64>() / n,
        f1: arms.iter().map(|a| a.f1).sum::<f64>() / n,
        precision: arms.iter().map(|a| a.precision).sum::<f64>() / n,
        sentence_event_accuracy: (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Ablation {
    pub std_weight: f64,
    pub sep_weight: f64,
    /// Selected std run against selected sep run (`a` = std, `b` = sep).
    pub comparison: RunComparison,
    pub pairs: Vec<PairedDelta>,
    pub std_mean: ArmMeans,
    pub sep_mean: ArmMeans,
    #[serde(skip)]
    pub std: SweepResult,
    #[serde(skip)]
    pub sep: SweepResult,
}

/// Two sweeps with identical seeds and learning rates, the first with
/// `std_weight` and the second with `sep_weight` (normally 0 and 1).
/// Per-run metrics come from each run's own best-dev checkpoint, on test
/// when available.
pub fn ablate(
    corpus: &Corpus,
    cfg: &TrainConfig,
    std_weight: f64,
    sep_weight: f64,
    out_dir: Option<&Path>,
) -> Result<Ablation> {
    for w in [std_weight, sep_weight] {
        TrainConfig { sep_weight: w, ..cfg.clone() }.validate()?;
    }
    let std = sweep_with_weight(corpus, cfg, std_weight, out_dir.map(|d| d.join("std")).as_deref())?;
    let sep = sweep_with_weight(corpus, cfg, sep_weight, out_dir.map(|d| d.join("sep")).as_deref())?;
    let pairs: Vec<PairedDelta> = std
        .runs
        .iter()
        .zip(&sep.runs)
        .map(|(a, b)| {
            let (x, y) = (ArmMetrics::from(a.final_report()), ArmMetrics::from(b.final_report()));
            PairedDelta {
                seed: a.seed,
                lr: a.lr,
                f1_delta: y.f1 - x.f1,
                precision_delta: y.precision - x.precision,
                fp_delta: y.fp as i64 - x.fp as i64,
                sentence_event_accuracy_delta: match (x.sentence_event_accuracy, y.sentence_event_accuracy) {
                    (Some(p), Some(q)) => Some(q - p),
                    _ => None,
                },
                std: x,
                sep: y,
            }
        })
        .collect();
    let std_mean = arm_means(&pairs.iter().map(|p| &p.std).collect::<Vec<_>>());
    let sep_mean = arm_means(&pairs.iter().map(|p| &p.sep).collect::<Vec<_>>());
    let comparison = compare_runs(std.best().final_report(), sep.best().final_report())?;
    let ablation = Ablation {
        std_weight,
        sep_weight,
        comparison,
        pairs,
        std_mean,
        sep_mean,
        std,
        sep,
    };
    if let Some(dir) = out_dir {
        write_json(&dir.join("ablation.json"), &ablation)?;
    }
    Ok(ablation)
}

#[cfg(test)]
mod tests;
