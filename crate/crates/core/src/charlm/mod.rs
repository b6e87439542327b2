//! Character-level LSTM language model.
//!
//! Each name is read from the zero state, starting with the start-of-name
//! symbol. After consuming `x_1..x_i` the model emits a distribution over the
//! vocabulary for `x_{i+1}`; the probability it assigns to the character that
//! actually follows is the transition probability used downstream.

mod checkpoint;
mod lstm;
mod train;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;

pub use checkpoint::{read_hidden_states, write_hidden_states, HiddenStates};
pub use lstm::LmParams;
pub use train::{train, TrainedLm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            hidden_dim: 128,
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.002,
            clip_norm: 5.0,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("LM dimensions must be at least 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Reading direction the model was trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Output of one pass over a name of length N: row `t` of both matrices is
/// step `t`, which has consumed the start symbol and `x_1..x_t`.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// N x |V|
    pub distributions: Array2<f64>,
    /// N x H
    pub hidden: Array2<f64>,
}

/// Transition between characters `position` and `position + 1` of a name.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub name_id: usize,
    pub position: usize,
    pub probability: f64,
    /// State after consuming characters `0..=position`.
    pub hidden: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageModel {
    pub vocabulary: Vocabulary,
    pub params: LmParams,
    pub direction: Direction,
}

impl LanguageModel {
    pub fn hidden_dim(&self) -> usize {
        self.params.hidden_dim()
    }

    pub fn forward(&self, name: &[char]) -> Result<ForwardPass> {
        let ids = self.vocabulary.encode(name)?;
        let mut inputs = Vec::with_capacity(ids.len());
        inputs.push(Vocabulary::START);
        inputs.extend_from_slice(&ids[..ids.len().saturating_sub(1)]);
        let traces = lstm::forward(&self.params, &[&inputs]);
        let n = traces.len();
        let mut distributions = Array2::zeros((n, self.params.vocab_size()));
        let mut hidden = Array2::zeros((n, self.params.hidden_dim()));
        for (t, tr) in traces.iter().enumerate() {
            distributions.row_mut(t).assign(&tr.probs.row(0));
            hidden.row_mut(t).assign(&tr.h.row(0));
        }
        Ok(ForwardPass {
            distributions,
            hidden,
        })
    }

    /// Per-character mean cross-entropy of the model on `corpus`.
    pub fn loss(&self, corpus: &Corpus) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for name in corpus.names() {
            let pass = self.forward(&name.normalized)?;
            let ids = self.vocabulary.encode(&name.normalized)?;
            for (t, &id) in ids.iter().enumerate() {
                total -= pass.distributions[[t, id]].max(f64::MIN_POSITIVE).ln();
            }
            count += ids.len();
        }
        Ok(total / count as f64)
    }

    /// Transition records for every adjacent pair of every name, corpus order.
    pub fn transitions(&self, corpus: &Corpus) -> Result<Vec<TransitionRecord>> {
        let per_name: Vec<Vec<TransitionRecord>> = corpus
            .names()
            .par_iter()
            .map(|name| {
                let pass = self.forward(&name.normalized)?;
                let ids = self.vocabulary.encode(&name.normalized)?;
                Ok((0..ids.len().saturating_sub(1))
                    .map(|i| TransitionRecord {
                        name_id: name.id,
                        position: i,
                        probability: pass.distributions[[i + 1, ids[i + 1]]],
                        hidden: pass.hidden.row(i + 1).to_vec(),
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(per_name.into_iter().flatten().collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode_lm(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        checkpoint::decode_lm(bytes)
    }

    /// SHA-256 of the checkpoint encoding, hex.
    pub fn content_hash(&self) -> String {
        crate::artifact::sha256_hex(&self.to_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct TransitionLine {
    id: usize,
    i: usize,
    p: f64,
}

/// JSON-lines `{"id", "i", "p"}`; hidden states go to a separate sidecar.
pub fn transitions_to_jsonl(records: &[TransitionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(
            &serde_json::to_string(&TransitionLine {
                id: r.name_id,
                i: r.position,
                p: r.probability,
            })
            .expect("transition serializes"),
        );
        out.push('\n');
    }
    out
}

/// Records without hidden states (empty `hidden`).
pub fn transitions_from_jsonl(text: &str) -> Result<Vec<TransitionRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let t: TransitionLine = serde_json::from_str(l)?;
            if !(0.0..=1.0).contains(&t.p) {
                return Err(Error::Format(format!("transition probability {} outside [0, 1]", t.p)));
            }
            Ok(TransitionRecord {
                name_id: t.id,
                position: t.i,
                probability: t.p,
                hidden: Vec::new(),
            })
        })
        .collect()
}
