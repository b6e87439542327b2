//! Ensemble of binary classifiers trained on balanced subsamples of the
//! pseudo labels, reading the language model's hidden states.
//!
//! Member `k` draws its subsample and its initial weights from a ChaCha
//! stream keyed by `(seed, k)`, so members can be trained in any order (or in
//! parallel) and still come out identical.

mod mlp;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{Reader, Writer};
use crate::charlm::HiddenStates;
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::thresholds::{Decision, Label, PseudoLabel};

pub use mlp::{ClassifierParams, Dense};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub members: usize,
    pub epsilon: f64,
    pub hidden_layers: Vec<usize>,
    pub decision_threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 100,
            epsilon: 0.1,
            hidden_layers: vec![64, 64],
            decision_threshold: 0.5,
            epochs: 50,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be at least 1".into()));
        }
        if self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("classifier epochs and learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(Error::Config("decision threshold outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Indices into the pseudo-label list chosen for one member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subsample {
    pub ties: Vec<usize>,
    pub breaks: Vec<usize>,
    /// per-class size asked for, `max(1, round(epsilon * M))`
    pub requested: usize,
}

impl Subsample {
    /// A class pool was smaller than the request and was taken whole.
    pub fn exhausted(&self) -> bool {
        self.ties.len() < self.requested || self.breaks.len() < self.requested
    }
}

fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng
}

pub fn subsample_size(breaks: usize, epsilon: f64) -> usize {
    ((epsilon * breaks as f64).round() as usize).max(1)
}

/// Draw `n = max(1, round(epsilon * M))` Ties and `n` Breaks without
/// replacement, `M` being the number of Break labels. Unknowns never enter.
pub fn balanced_subsample(labels: &[PseudoLabel], epsilon: f64, seed: u64, member: usize) -> Result<Subsample> {
    let mut rng = member_rng(seed, member);
    draw(labels, epsilon, &mut rng)
}

fn draw(labels: &[PseudoLabel], epsilon: f64, rng: &mut ChaCha8Rng) -> Result<Subsample> {
    let tie_pool: Vec<usize> = (0..labels.len()).filter(|&k| labels[k].label == Label::Tie).collect();
    let break_pool: Vec<usize> = (0..labels.len()).filter(|&k| labels[k].label == Label::Break).collect();
    if tie_pool.is_empty() || break_pool.is_empty() {
        return Err(Error::DegeneratePseudoLabels {
            ties: tie_pool.len(),
            breaks: break_pool.len(),
        });
    }
    let n = subsample_size(break_pool.len(), epsilon);
    let pick = |pool: &[usize], rng: &mut ChaCha8Rng| -> Vec<usize> {
        let take = n.min(pool.len());
        let mut chosen: Vec<usize> = index::sample(rng, pool.len(), take).into_iter().map(|j| pool[j]).collect();
        chosen.sort_unstable();
        chosen
    };
    let ties = pick(&tie_pool, rng);
    let breaks = pick(&break_pool, rng);
    Ok(Subsample {
        ties,
        breaks,
        requested: n,
    })
}

/// Full-batch training on the subsample; Tie is the positive class.
pub fn train_classifier(
    subset: &Subsample,
    features: ArrayView2<f64>,
    config: &EnsembleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ClassifierParams> {
    let rows: Vec<usize> = subset.ties.iter().chain(&subset.breaks).copied().collect();
    let mut x = Array2::<f64>::zeros((rows.len(), features.ncols()));
    for (r, &k) in rows.iter().enumerate() {
        x.row_mut(r).assign(&features.row(k));
    }
    let mut y = vec![1.0; subset.ties.len()];
    y.resize(rows.len(), 0.0);
    train_on(x.view(), &y, config, rng)
}

pub(crate) fn train_on(
    x: ArrayView2<f64>,
    y: &[f64],
    config: &EnsembleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ClassifierParams> {
    let mut params = ClassifierParams::init(x.ncols(), &config.hidden_layers, rng);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &params.tensor_sizes());
    for epoch in 0..config.epochs {
        let (loss, grads) = params.loss_and_grad(x, y);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, batch: 0 });
        }
        opt.step(params.tensors_mut(), grads.tensors());
    }
    Ok(params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<ClassifierParams>,
    pub config: EnsembleConfig,
    /// Content hash of the LM whose hidden states the members were fit on.
    pub lm_hash: String,
}

/// Averaged Tie probability and the thresholded decision for one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub tie_probability: f64,
    pub decision: Decision,
}

/// `labels` must be row-aligned with `hidden`.
pub fn train_ensemble(labels: &[PseudoLabel], hidden: &HiddenStates, config: &EnsembleConfig) -> Result<EnsembleModel> {
    config.validate()?;
    if labels.len() != hidden.len()
        || labels
            .iter()
            .zip(&hidden.keys)
            .any(|(l, &(id, pos))| l.name_id != id || l.position != pos)
    {
        return Err(Error::ModelMismatch(
            "pseudo labels and hidden states are not aligned".into(),
        ));
    }
    let members = (0..config.members)
        .into_par_iter()
        .map(|k| {
            let mut rng = member_rng(config.seed, k);
            let subset = draw(labels, config.epsilon, &mut rng)?;
            if subset.exhausted() && k == 0 {
                log::warn!(
                    "class pool smaller than requested subsample ({} Tie, {} Break, wanted {})",
                    subset.ties.len(),
                    subset.breaks.len(),
                    subset.requested
                );
            }
            train_classifier(&subset, hidden.values.view(), config, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        members,
        config: config.clone(),
        lm_hash: hidden.lm_hash.clone(),
    })
}

impl EnsembleModel {
    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn check(&self, dim: usize, lm_hash: &str) -> Result<()> {
        if lm_hash != self.lm_hash {
            return Err(Error::ModelMismatch(format!(
                "ensemble was trained against LM {}, features come from LM {}",
                short(&self.lm_hash),
                short(lm_hash)
            )));
        }
        if dim != self.input_dim() {
            return Err(Error::ModelMismatch(format!(
                "ensemble expects {}-dim hidden states, got {dim}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Mean member output per row. Member outputs are summed in sorted order
    /// so the mean does not depend on member order.
    pub fn tie_probabilities(&self, features: ArrayView2<f64>, lm_hash: &str) -> Result<Vec<f64>> {
        self.check(features.ncols(), lm_hash)?;
        let outputs: Vec<_> = self.members.iter().map(|m| m.predict(features)).collect();
        let k = self.members.len() as f64;
        let mut column = Vec::with_capacity(outputs.len());
        Ok((0..features.nrows())
            .map(|r| {
                column.clear();
                column.extend(outputs.iter().map(|o| o[r]));
                column.sort_by(f64::total_cmp);
                column.iter().sum::<f64>() / k
            })
            .collect())
    }

    pub fn decide(&self, tie_probability: f64) -> Decision {
        if tie_probability >= self.config.decision_threshold {
            Decision::Tie
        } else {
            Decision::Break
        }
    }

    pub fn predict_many(&self, features: ArrayView2<f64>, lm_hash: &str) -> Result<Vec<Prediction>> {
        Ok(self
            .tie_probabilities(features, lm_hash)?
            .into_iter()
            .map(|p| Prediction {
                tie_probability: p,
                decision: self.decide(p),
            })
            .collect())
    }

    pub fn predict_transition(&self, hidden: &[f64], lm_hash: &str) -> Result<Prediction> {
        let x = ArrayView2::from_shape((1, hidden.len()), hidden).expect("row vector");
        Ok(self.predict_many(x, lm_hash)?[0])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(ENSEMBLE_MAGIC);
        w.u32(VERSION);
        w.string(&self.lm_hash);
        let c = &self.config;
        w.u32(c.members as u32);
        w.f64(c.epsilon);
        w.u32(c.hidden_layers.len() as u32);
        for &h in &c.hidden_layers {
            w.u32(h as u32);
        }
        w.f64(c.decision_threshold);
        w.u32(c.epochs as u32);
        w.f64(c.learning_rate);
        w.u8(c.optimizer.code());
        w.u64(c.seed);
        w.u32(self.input_dim() as u32);
        for m in &self.members {
            for t in m.tensors() {
                w.f64s(t);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(ENSEMBLE_MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported ensemble version {version}")));
        }
        let lm_hash = r.string()?;
        let members = r.u32()? as usize;
        let epsilon = r.f64()?;
        let n_layers = r.u32()? as usize;
        let hidden_layers = (0..n_layers)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let config = EnsembleConfig {
            members,
            epsilon,
            hidden_layers,
            decision_threshold: r.f64()?,
            epochs: r.u32()? as usize,
            learning_rate: r.f64()?,
            optimizer: OptimizerKind::from_code(r.u8()?)?,
            seed: r.u64()?,
        };
        config.validate()?;
        let input_dim = r.u32()? as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::with_capacity(members);
        for _ in 0..members {
            let mut m = ClassifierParams::init(input_dim, &config.hidden_layers, &mut rng);
            for t in m.tensors_mut() {
                r.f64s_into(t)?;
            }
            out.push(m);
        }
        r.finish()?;
        Ok(Self {
            members: out,
            config,
            lm_hash,
        })
    }
}

/// Ensemble checkpoint:
///
/// ```text
/// magic "SSEGENSM", version u32, lm_hash (u32 len + UTF-8),
/// members u32, epsilon f64, n_layers u32, widths u32 x n_layers,
/// decision_threshold f64, epochs u32, learning_rate f64, optimizer u8,
/// seed u64, input_dim u32,
/// then per member, per layer: weights f64 (out x in, row-major), bias f64
/// ```
const ENSEMBLE_MAGIC: &[u8; 8] = b"SSEGENSM";
const VERSION: u32 = 1;

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}
