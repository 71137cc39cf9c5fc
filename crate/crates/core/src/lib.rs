//! Event trigger detection as transformer sequence labeling, trained with a
//! token-level tagging loss plus a sentence-level event-presence loss.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine
//! ([`autodiff`]), a transformer [`encoder`], IOB2 [`tagging`] with both
//! classification heads and losses, the JSONL [`corpus`] format and a
//! synthetic generator, ACE-style [`metrics`], and the training
//! [`harness`].

pub mod autodiff;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod tagging;

pub use corpus::{Corpus, Sentence, Split, SynthSpec, Vocab};
pub use encoder::EncoderConfig;
pub use error::{Error, ErrorKind, Result};
pub use harness::{RunRecord, TrainConfig};
pub use metrics::{EvalReport, EventAccuracy};
pub use tagging::{LabelSet, SentencePrediction, TriggerModel, TriggerSpan};
