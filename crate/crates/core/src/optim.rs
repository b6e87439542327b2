//! First-order optimizers over flat parameter slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(OptimizerKind::Sgd),
            1 => Ok(OptimizerKind::Adam),
            _ => Err(Error::Format(format!("unknown optimizer code {code}"))),
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "gd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, sizes: &[usize]) -> Self {
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (
                sizes.iter().map(|&n| vec![0.0; n]).collect(),
                sizes.iter().map(|&n| vec![0.0; n]).collect(),
            ),
        };
        Self {
            kind,
            learning_rate,
            step: 0,
            first,
            second,
        }
    }

    /// `params` and `grads` must line up tensor by tensor with the sizes the
    /// optimizer was built with.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, d) in p.iter_mut().zip(g) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let bias1 = 1.0 - BETA1.powi(self.step);
                let bias2 = 1.0 - BETA2.powi(self.step);
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let m = &mut self.first[k];
                    let v = &mut self.second[k];
                    for j in 0..p.len() {
                        let d = g[j];
                        m[j] = BETA1 * m[j] + (1.0 - BETA1) * d;
                        v[j] = BETA2 * v[j] + (1.0 - BETA2) * d * d;
                        let m_hat = m[j] / bias1;
                        let v_hat = v[j] / bias2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// Rescale `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: Vec<&mut [f64]>, max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_the_norm() {
        let mut a = vec![3.0, 0.0];
        let mut b = vec![4.0];
        let n = clip_global_norm(vec![&mut a, &mut b], 1.0);
        assert!((n - 5.0).abs() < 1e-12);
        let after = (a[0] * a[0] + b[0] * b[0]).sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = vec![5.0, -3.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, &[2]);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(vec![&mut x], vec![&g]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn sgd_step() {
        let mut x = vec![1.0];
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.5, &[1]);
        opt.step(vec![&mut x], vec![&[2.0]]);
        assert_eq!(x, vec![0.0]);
    }
}
