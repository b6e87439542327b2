//! Fully connected binary classifier: ReLU hidden layers, one logistic output
//! unit, binary cross-entropy.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// out x in
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub layers: Vec<Dense>,
}

impl ClassifierParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-limit..=limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weights.nrows())
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    /// Output-unit logits, one per row of `x`.
    pub fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let (_, out) = self.forward_trace(x);
        out
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.logits(x).mapv(sigmoid)
    }

    /// Post-activation outputs of every hidden layer, plus final logits.
    fn forward_trace(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        let mut input = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Array2::<f64>::zeros((input.nrows(), layer.weights.nrows()));
            general_mat_mul(1.0, &input, &layer.weights.t(), 0.0, &mut z);
            z += &layer.bias;
            if k == last {
                acts.push(input);
                return (acts, z.column(0).to_owned());
            }
            z.mapv_inplace(|v| v.max(0.0));
            acts.push(input);
            input = z;
        }
        unreachable!("classifier has an output layer")
    }

    /// Mean binary cross-entropy over the rows and its gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: &[f64]) -> (f64, ClassifierParams) {
        let n = x.nrows();
        let (acts, logits) = self.forward_trace(x);
        let mut loss = 0.0;
        let mut dz = Array2::<f64>::zeros((n, 1));
        for r in 0..n {
            let z = logits[r];
            loss += z.max(0.0) - z * y[r] + (-z.abs()).exp().ln_1p();
            dz[[r, 0]] = (sigmoid(z) - y[r]) / n as f64;
        }
        loss /= n as f64;

        let mut grads = self.zeros_like();
        for k in (0..self.layers.len()).rev() {
            let a_prev = &acts[k];
            general_mat_mul(1.0, &dz.t(), a_prev, 0.0, &mut grads.layers[k].weights);
            grads.layers[k].bias = dz.sum_axis(Axis(0));
            if k > 0 {
                let mut da = dz.dot(&self.layers[k].weights);
                // a_prev is a ReLU output: gradient passes where it is positive
                ndarray::Zip::from(&mut da).and(a_prev).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = da;
            }
        }
        (loss, grads)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
