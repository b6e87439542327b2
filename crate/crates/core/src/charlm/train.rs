use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{self, LmParams};
use super::{Direction, LanguageModel, LmConfig};
use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::optim::{clip_global_norm, Optimizer};

#[derive(Clone, Debug)]
pub struct TrainedLm {
    pub model: LanguageModel,
    /// Per-character mean cross-entropy (nats) of each epoch, measured on the
    /// batches as they were visited.
    pub loss_history: Vec<f64>,
}

struct Example {
    inputs: Vec<usize>,
    targets: Vec<usize>,
}

/// Train for exactly `config.epochs` epochs; no early stopping.
///
/// Names are bucketed by length so a batch never mixes lengths, and every
/// name starts from the zero state. Batch order and bucket contents are
/// reshuffled each epoch from the seeded generator.
pub fn train(corpus: &Corpus, config: &LmConfig) -> Result<TrainedLm> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = corpus.vocabulary().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LmParams::init(vocab.len(), config.embedding_dim, config.hidden_dim, &mut rng);

    let mut buckets: BTreeMap<usize, Vec<Example>> = BTreeMap::new();
    for name in corpus.names() {
        let targets = vocab.encode(&name.normalized)?;
        let mut inputs = Vec::with_capacity(targets.len());
        inputs.push(Vocabulary::START);
        inputs.extend_from_slice(&targets[..targets.len() - 1]);
        buckets
            .entry(targets.len())
            .or_default()
            .push(Example { inputs, targets });
    }

    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &params.tensor_sizes());
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut batches: Vec<Vec<&Example>> = Vec::new();
        for examples in buckets.values() {
            let mut order: Vec<&Example> = examples.iter().collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                batches.push(chunk.to_vec());
            }
        }
        batches.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_chars = 0usize;
        for (batch_index, batch) in batches.iter().enumerate() {
            let inputs: Vec<&[usize]> = batch.iter().map(|e| e.inputs.as_slice()).collect();
            let targets: Vec<&[usize]> = batch.iter().map(|e| e.targets.as_slice()).collect();
            let chars = inputs.len() * inputs[0].len();
            let traces = lstm::forward(&params, &inputs);
            let loss = lstm::cross_entropy(&traces, &targets);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_index,
                });
            }
            let mut grads = lstm::backward(&params, &inputs, &targets, &traces, 1.0 / chars as f64);
            clip_global_norm(grads.tensors_mut().into(), config.clip_norm);
            let grad_slices: Vec<&[f64]> = grads.tensors().into();
            optimizer.step(params.tensors_mut().into(), grad_slices);
            epoch_loss += loss;
            epoch_chars += chars;
        }
        let mean = epoch_loss / epoch_chars as f64;
        log::debug!("lm epoch {epoch}: loss {mean:.5}");
        loss_history.push(mean);
    }
    if !params.is_finite() {
        return Err(Error::Divergence {
            epoch: config.epochs,
            batch: 0,
        });
    }

    Ok(TrainedLm {
        model: LanguageModel {
            vocabulary: vocab,
            params,
            direction: Direction::Forward,
        },
        loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerKind;

    fn small(epochs: usize) -> LmConfig {
        LmConfig {
            embedding_dim: 8,
            hidden_dim: 16,
            epochs,
            batch_size: 32,
            learning_rate: 0.01,
            seed: 3,
            ..LmConfig::default()
        }
    }

    #[test]
    fn single_name_converges() {
        let corpus = Corpus::from_names(&["ABAB"]).unwrap();
        let trained = train(&corpus, &small(300)).unwrap();
        let last = *trained.loss_history.last().unwrap();
        assert!(last < 0.05, "final loss {last}");
        let recs = trained.model.transitions(&corpus).unwrap();
        assert!(recs.iter().all(|r| r.probability > 0.99));
    }

    #[test]
    fn single_name_loss_decreases_monotonically() {
        let corpus = Corpus::from_names(&["SODA0R000"]).unwrap();
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let cfg = LmConfig {
                optimizer,
                learning_rate: if optimizer == OptimizerKind::Sgd { 0.5 } else { 0.005 },
                ..small(150)
            };
            let h = train(&corpus, &cfg).unwrap().loss_history;
            for w in h.windows(2) {
                assert!(w[1] < w[0], "{optimizer:?}: loss went up {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = Corpus::from_names(&["AB_C0", "AB_D0", "XY", "AB_C00"]).unwrap();
        let a = train(&corpus, &small(5)).unwrap();
        let b = train(&corpus, &small(5)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert_eq!(a.loss_history, b.loss_history);
        let other = train(&corpus, &LmConfig { seed: 4, ..small(5) }).unwrap();
        assert_ne!(a.model.params, other.model.params);
    }

    #[test]
    fn equal_branches_split_probability() {
        let names: Vec<&str> = std::iter::repeat_n(["AB", "AC"], 20).flatten().collect();
        let corpus = Corpus::from_names(&names).unwrap();
        let trained = train(&corpus, &small(60)).unwrap();
        for r in trained.model.transitions(&corpus).unwrap() {
            assert!((r.probability - 0.5).abs() < 0.05, "{}", r.probability);
        }
    }

    /// One-character names: no transitions, but the first-character
    /// distribution is still learned; the loss approaches its entropy.
    #[test]
    fn one_character_names_learn_first_character_distribution() {
        let mut names = vec!["A"; 30];
        names.extend(vec!["B"; 10]);
        let corpus = Corpus::from_names(&names).unwrap();
        let trained = train(&corpus, &small(200)).unwrap();
        assert!(trained.model.transitions(&corpus).unwrap().is_empty());
        let entropy = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let loss = trained.model.loss(&corpus).unwrap();
        assert!((loss - entropy).abs() < 0.01, "loss {loss} entropy {entropy}");
    }

    #[test]
    fn rejects_bad_config() {
        let corpus = Corpus::from_names(&["AB"]).unwrap();
        assert!(matches!(
            train(&corpus, &LmConfig { epochs: 0, ..small(1) }),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train(&corpus, &LmConfig { clip_norm: 0.0, ..small(1) }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let corpus = Corpus::from_names(&["ABAB", "BABA"]).unwrap();
        let cfg = LmConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: f64::MAX,
            clip_norm: f64::MAX,
            ..small(3)
        };
        assert!(matches!(train(&corpus, &cfg), Err(Error::Divergence { .. })));
    }
}
