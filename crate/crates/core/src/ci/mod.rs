//! Conditional-independence classifier over `(u_j, u_{t-1}, r_t)` triples.
//!
//! The classifier encodes `response SEP u_prev SEP u_j` with an [`Encoder`],
//! mean-pools the returned vectors and applies a linear layer and a sigmoid.
//! A score near 1 means `r_t` still depends on `u_j` once `u_{t-1}` is known.

mod checkpoint;
mod classifier;
mod dataset;
mod encoder;
mod eval;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PairKey;

pub use checkpoint::{load_checkpoint, read_head, save_checkpoint, EncoderInfo, HeadFile, FORMAT_VERSION};
pub use classifier::{sigmoid, CiClassifier, ClassifierKind, Head, LOGIT_CLAMP};
pub use dataset::{build_dependence_set, build_supervised_set, candidate_triples, triple_for, DEPENDENCE_MIN_GAP};
pub use encoder::{normalize_token, BagOfWordsEncoder, BowConfig, Encoder, EncoderError, BOW_NAME};
pub use eval::{evaluate_classifier, evaluate_triples, ClassifierEval};
pub use train::{
    bce_loss_and_grad, evaluate_features, train_features, train_supervised, Balance, BatchLog, EpochLog, FeatureSet,
    TrainConfig, TrainReport,
};

pub const DEFAULT_SEPARATOR: &str = "</s>";

/// Segment order of the serialized classifier input.
pub const INPUT_ORDER: [&str; 3] = ["response", "u_prev", "u_j"];

#[derive(Debug, Error)]
pub enum CiError {
    #[error("encoder failure on {context}: {source}")]
    Encoder {
        context: String,
        #[source]
        source: EncoderError,
    },
    #[error("training data has a single class ({0})")]
    SingleClassData(String),
    #[error("no positive examples to evaluate")]
    NoPositives,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unresolvable pair {0}")]
    Unresolvable(PairKey),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("missing checkpoint at {0}")]
    MissingCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CiError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub dialogue_id: String,
    pub u_j: String,
    pub u_prev: String,
    pub response: String,
    pub j: usize,
    pub t: usize,
}

impl Triple {
    pub fn key(&self) -> PairKey {
        PairKey {
            dialogue_id: self.dialogue_id.clone(),
            t: self.t,
        }
    }

    fn describe(&self) -> String {
        format!("triple {}@{} j={}", self.dialogue_id, self.t, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Gold,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub triple: Triple,
    pub label: bool,
    pub origin: Origin,
}

/// Joins `segments` with ` SEP `; an empty separator joins with one space.
pub fn join_segments(segments: &[&str], separator: &str) -> String {
    if separator.is_empty() {
        segments.join(" ")
    } else {
        segments.join(&format!(" {separator} "))
    }
}

/// Serialized classifier input: `response SEP u_prev SEP u_j`.
pub fn build_input(triple: &Triple, separator: &str) -> String {
    join_segments(&[&triple.response, &triple.u_prev, &triple.u_j], separator)
}
