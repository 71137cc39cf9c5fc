//! IOB2 labels, classification heads, training objectives, and decoding.

mod heads;
mod iob2;
mod labels;
mod loss;
mod model;

pub use heads::{head_forward, BoundHead, SepHead, TokenHead, SEP_HEAD_PREFIX, TOKEN_HEAD_PREFIX};
pub use iob2::{decode_iob2, encode_iob2};
pub use labels::{validate_spans, LabelSet, Tag, TriggerSpan};
pub use loss::{joint_loss, sep_loss, token_loss, JointLoss};
pub use model::{
    argmax, BoundModel, Checkpoint, SentenceOutputs, SentencePrediction, TriggerModel, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
