//! Single-layer LSTM with a softmax read-out, batched over equal-length names.
//!
//! Gate rows of `gate_weights` are laid out as input, forget, cell, output,
//! each block `hidden_dim` rows tall, acting on `[embedding ; h_prev]`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct LmParams {
    /// |V| x E
    pub embedding: Array2<f64>,
    /// 4H x (E + H)
    pub gate_weights: Array2<f64>,
    /// 4H
    pub gate_bias: Array1<f64>,
    /// |V| x H; row c is the read-out vector for character c
    pub output_weights: Array2<f64>,
    /// |V|
    pub output_bias: Array1<f64>,
}

pub(crate) const INIT_SCALE: f64 = 0.08;

impl LmParams {
    pub fn zeros(vocab_size: usize, embedding_dim: usize, hidden_dim: usize) -> Self {
        Self {
            embedding: Array2::zeros((vocab_size, embedding_dim)),
            gate_weights: Array2::zeros((4 * hidden_dim, embedding_dim + hidden_dim)),
            gate_bias: Array1::zeros(4 * hidden_dim),
            output_weights: Array2::zeros((vocab_size, hidden_dim)),
            output_bias: Array1::zeros(vocab_size),
        }
    }

    /// Uniform weights in [-0.08, 0.08], zero biases except the forget gate at 1.
    pub fn init<R: Rng>(vocab_size: usize, embedding_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab_size, embedding_dim, hidden_dim);
        for w in p
            .embedding
            .iter_mut()
            .chain(p.gate_weights.iter_mut())
            .chain(p.output_weights.iter_mut())
        {
            *w = rng.gen_range(-INIT_SCALE..=INIT_SCALE);
        }
        p.gate_bias
            .slice_mut(s![hidden_dim..2 * hidden_dim])
            .fill(1.0);
        p
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.output_weights.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size(), self.embedding_dim(), self.hidden_dim())
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.embedding.as_slice().expect("standard layout"),
            self.gate_weights.as_slice().expect("standard layout"),
            self.gate_bias.as_slice().expect("standard layout"),
            self.output_weights.as_slice().expect("standard layout"),
            self.output_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embedding.as_slice_mut().expect("standard layout"),
            self.gate_weights.as_slice_mut().expect("standard layout"),
            self.gate_bias.as_slice_mut().expect("standard layout"),
            self.output_weights.as_slice_mut().expect("standard layout"),
            self.output_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) struct StepTrace {
    /// `[x_t ; h_{t-1}]`
    z: Array2<f64>,
    /// activated i, f, g, o
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    pub h: Array2<f64>,
    pub probs: Array2<f64>,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

/// Run every sequence in `inputs` (all the same length) from the zero state.
/// Step `t` consumes `inputs[b][t]` and emits a distribution over the
/// vocabulary for the next symbol.
pub(crate) fn forward(params: &LmParams, inputs: &[&[usize]]) -> Vec<StepTrace> {
    let batch = inputs.len();
    let steps = inputs.first().map_or(0, |s| s.len());
    debug_assert!(inputs.iter().all(|s| s.len() == steps));
    let e = params.embedding_dim();
    let hd = params.hidden_dim();

    let mut h = Array2::<f64>::zeros((batch, hd));
    let mut c = Array2::<f64>::zeros((batch, hd));
    let mut traces = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut z = Array2::<f64>::zeros((batch, e + hd));
        for (row, seq) in inputs.iter().enumerate() {
            z.slice_mut(s![row, ..e]).assign(&params.embedding.row(seq[t]));
            z.slice_mut(s![row, e..]).assign(&h.row(row));
        }
        let mut gates = Array2::<f64>::zeros((batch, 4 * hd));
        general_mat_mul(1.0, &z, &params.gate_weights.t(), 0.0, &mut gates);
        gates += &params.gate_bias;

        let mut c_new = Array2::<f64>::zeros((batch, hd));
        let mut tanh_c = Array2::<f64>::zeros((batch, hd));
        let mut h_new = Array2::<f64>::zeros((batch, hd));
        for r in 0..batch {
            let mut g_row = gates.row_mut(r);
            for k in 0..hd {
                let i = sigmoid(g_row[k]);
                let f = sigmoid(g_row[hd + k]);
                let g = g_row[2 * hd + k].tanh();
                let o = sigmoid(g_row[3 * hd + k]);
                g_row[k] = i;
                g_row[hd + k] = f;
                g_row[2 * hd + k] = g;
                g_row[3 * hd + k] = o;
                let cv = f * c[[r, k]] + i * g;
                let tc = cv.tanh();
                c_new[[r, k]] = cv;
                tanh_c[[r, k]] = tc;
                h_new[[r, k]] = o * tc;
            }
        }

        let mut probs = Array2::<f64>::zeros((batch, params.vocab_size()));
        general_mat_mul(1.0, &h_new, &params.output_weights.t(), 0.0, &mut probs);
        probs += &params.output_bias;
        softmax_rows(&mut probs);

        h = h_new.clone();
        c = c_new.clone();
        traces.push(StepTrace {
            z,
            gates,
            c: c_new,
            tanh_c,
            h: h_new,
            probs,
        });
    }
    traces
}

/// Summed cross-entropy of `targets` under the traced distributions.
pub(crate) fn cross_entropy(traces: &[StepTrace], targets: &[&[usize]]) -> f64 {
    let mut loss = 0.0;
    for (t, tr) in traces.iter().enumerate() {
        for (r, seq) in targets.iter().enumerate() {
            loss -= tr.probs[[r, seq[t]]].ln();
        }
    }
    loss
}

/// Backpropagation through time for `scale * summed cross-entropy`.
pub(crate) fn backward(
    params: &LmParams,
    inputs: &[&[usize]],
    targets: &[&[usize]],
    traces: &[StepTrace],
    scale: f64,
) -> LmParams {
    let batch = inputs.len();
    let e = params.embedding_dim();
    let hd = params.hidden_dim();
    let mut grads = params.zeros_like();

    let mut dh_next = Array2::<f64>::zeros((batch, hd));
    let mut dc_next = Array2::<f64>::zeros((batch, hd));
    let zero_state = Array2::<f64>::zeros((batch, hd));
    for t in (0..traces.len()).rev() {
        let tr = &traces[t];
        let c_prev = if t > 0 { &traces[t - 1].c } else { &zero_state };

        let mut dlogits = tr.probs.clone();
        for (r, seq) in targets.iter().enumerate() {
            dlogits[[r, seq[t]]] -= 1.0;
        }
        dlogits *= scale;
        general_mat_mul(1.0, &dlogits.t(), &tr.h, 1.0, &mut grads.output_weights);
        grads.output_bias += &dlogits.sum_axis(Axis(0));

        let mut dh = dlogits.dot(&params.output_weights);
        dh += &dh_next;

        let mut dgates = Array2::<f64>::zeros((batch, 4 * hd));
        for r in 0..batch {
            for k in 0..hd {
                let i = tr.gates[[r, k]];
                let f = tr.gates[[r, hd + k]];
                let g = tr.gates[[r, 2 * hd + k]];
                let o = tr.gates[[r, 3 * hd + k]];
                let tc = tr.tanh_c[[r, k]];
                let dhv = dh[[r, k]];
                let d_o = dhv * tc;
                let dc = dhv * o * (1.0 - tc * tc) + dc_next[[r, k]];
                dgates[[r, k]] = dc * g * i * (1.0 - i);
                dgates[[r, hd + k]] = dc * c_prev[[r, k]] * f * (1.0 - f);
                dgates[[r, 2 * hd + k]] = dc * i * (1.0 - g * g);
                dgates[[r, 3 * hd + k]] = d_o * o * (1.0 - o);
                dc_next[[r, k]] = dc * f;
            }
        }
        general_mat_mul(1.0, &dgates.t(), &tr.z, 1.0, &mut grads.gate_weights);
        grads.gate_bias += &dgates.sum_axis(Axis(0));

        let dz = dgates.dot(&params.gate_weights);
        for (r, seq) in inputs.iter().enumerate() {
            let mut row = grads.embedding.row_mut(seq[t]);
            row += &dz.slice(s![r, ..e]);
        }
        dh_next.assign(&dz.slice(s![.., e..]));
    }
    grads
}

impl LmParams {
    /// Summed cross-entropy of equal-length sequences and its gradient.
    pub fn loss_and_grad(&self, inputs: &[&[usize]], targets: &[&[usize]]) -> (f64, LmParams) {
        let traces = forward(self, inputs);
        let loss = cross_entropy(&traces, targets);
        (loss, backward(self, inputs, targets, &traces, 1.0))
    }
}
