use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sensor name: {0}")]
    InvalidName(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("corpus contains no names")]
    EmptyCorpus,

    #[error("label length mismatch for {name:?}: name has {name_len} characters, tags have {tag_len}")]
    LabelLength {
        name: String,
        name_len: usize,
        tag_len: usize,
    },

    #[error("invalid BIO sequence {tags:?}: {reason}")]
    InvalidBio { tags: String, reason: String },

    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(char),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("no transitions to build a histogram from")]
    EmptyTransitions,

    #[error("no histogram mass in search interval [{lo:.3}, {hi:.3}]")]
    NoPeak { lo: f64, hi: f64 },

    #[error("this operation needs ground-truth labels")]
    NeedsLabels,

    #[error("pseudo labels are degenerate: {ties} Tie and {breaks} Break")]
    DegeneratePseudoLabels { ties: usize, breaks: usize },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("expected {expected} decisions, got {got}")]
    DecisionLength { expected: usize, got: usize },

    #[error("no ground truth for name id {0}")]
    MissingLabel(usize),

    #[error("naming scheme error: {0}")]
    Scheme(String),

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
