//! Run configuration: plain `key = value` text with command-line overrides.
//! Every setting has a default, so a resolved config is always complete.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::charlm::LmConfig;
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::segmenter::PipelineConfig;
use crate::thresholds::{Interval, Milli, SearchIntervals};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    /// seeds the LM, the ensemble, and (where used) the synthetic generator
    pub seed: u64,
    pub lm: LmConfig,
    pub ensemble: EnsembleConfig,
    pub intervals: SearchIntervals,
}

/// Every key with a one-line description, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for LM training, ensemble sampling and synthesis"),
    ("lm.embedding_dim", "character embedding width"),
    ("lm.hidden_dim", "LSTM hidden width; also the classifier input width"),
    ("lm.epochs", "training epochs, no early stopping"),
    ("lm.batch_size", "names per batch (batches never mix lengths)"),
    ("lm.learning_rate", "step size"),
    ("lm.clip_norm", "global gradient-norm clip"),
    ("lm.optimizer", "adam or sgd"),
    ("ensemble.members", "number of classifiers K"),
    ("ensemble.epsilon", "per-class subsample size as a fraction of the Break count"),
    ("ensemble.hidden_layers", "comma-separated hidden widths"),
    ("ensemble.epochs", "full-batch updates per classifier"),
    ("ensemble.learning_rate", "classifier step size"),
    ("ensemble.optimizer", "adam or sgd"),
    ("ensemble.decision_threshold", "averaged Tie probability at or above which a transition is a Tie"),
    ("thresholds.tie_interval", "lo,hi search interval for t1"),
    ("thresholds.break_interval", "lo,hi search interval for t0"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_interval(key: &str, value: &str) -> Result<Interval> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("{key}: expected lo,hi, got {value:?}")));
    }
    let lo = Milli::round(parse(key, parts[0])?)?;
    let hi = Milli::round(parse(key, parts[1])?)?;
    if lo > hi {
        return Err(Error::Config(format!("{key}: lo above hi")));
    }
    Ok(Interval { lo, hi })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "lm.embedding_dim" => self.lm.embedding_dim = parse(key, v)?,
            "lm.hidden_dim" => self.lm.hidden_dim = parse(key, v)?,
            "lm.epochs" => self.lm.epochs = parse(key, v)?,
            "lm.batch_size" => self.lm.batch_size = parse(key, v)?,
            "lm.learning_rate" => self.lm.learning_rate = parse(key, v)?,
            "lm.clip_norm" => self.lm.clip_norm = parse(key, v)?,
            "lm.optimizer" => self.lm.optimizer = v.parse::<OptimizerKind>()?,
            "ensemble.members" => self.ensemble.members = parse(key, v)?,
            "ensemble.epsilon" => self.ensemble.epsilon = parse(key, v)?,
            "ensemble.hidden_layers" => {
                self.ensemble.hidden_layers = v
                    .split(',')
                    .map(|w| parse(key, w))
                    .collect::<Result<Vec<usize>>>()?
            }
            "ensemble.epochs" => self.ensemble.epochs = parse(key, v)?,
            "ensemble.learning_rate" => self.ensemble.learning_rate = parse(key, v)?,
            "ensemble.optimizer" => self.ensemble.optimizer = v.parse::<OptimizerKind>()?,
            "ensemble.decision_threshold" => self.ensemble.decision_threshold = parse(key, v)?,
            "thresholds.tie_interval" => self.intervals.tie = parse_interval(key, v)?,
            "thresholds.break_interval" => self.intervals.brk = parse_interval(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines; blank lines and lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", k + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// `key=value` override as given on the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        self.set(key, value)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().lm.validate()?;
        self.ensemble.validate()?;
        if self.intervals.brk.hi >= self.intervals.tie.lo {
            return Err(Error::Config("break interval must lie below the tie interval".into()));
        }
        Ok(())
    }

    /// Pipeline settings with the master seed applied.
    pub fn pipeline(&self) -> PipelineConfig {
        let mut lm = self.lm.clone();
        lm.seed = self.seed;
        let mut ensemble = self.ensemble.clone();
        ensemble.seed = self.seed;
        PipelineConfig {
            lm,
            ensemble,
            intervals: self.intervals,
        }
    }

    /// Fully resolved settings, one entry per key.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let widths: Vec<String> = self.ensemble.hidden_layers.iter().map(|w| w.to_string()).collect();
        let iv = |i: Interval| format!("{},{}", i.lo, i.hi);
        let values = [
            self.seed.to_string(),
            self.lm.embedding_dim.to_string(),
            self.lm.hidden_dim.to_string(),
            self.lm.epochs.to_string(),
            self.lm.batch_size.to_string(),
            self.lm.learning_rate.to_string(),
            self.lm.clip_norm.to_string(),
            self.lm.optimizer.as_str().to_string(),
            self.ensemble.members.to_string(),
            self.ensemble.epsilon.to_string(),
            widths.join(","),
            self.ensemble.epochs.to_string(),
            self.ensemble.learning_rate.to_string(),
            self.ensemble.optimizer.as_str().to_string(),
            self.ensemble.decision_threshold.to_string(),
            iv(self.intervals.tie),
            iv(self.intervals.brk),
        ];
        KEYS.iter().map(|(k, _)| k.to_string()).zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        let echo = self.echo();
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k} = {}", echo[*k]);
        }
        out
    }
}
