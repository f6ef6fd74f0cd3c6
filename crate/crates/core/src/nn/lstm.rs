//! LSTM cell and its unrolled forward/backward passes.
//!
//! Gate layout follows the standard formulation: input, forget, and output
//! gates are logistic, the candidate cell value is tanh, and
//! `c_t = f ∘ c_{t-1} + i ∘ g`, `h_t = o ∘ tanh(c_t)`.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::{sigmoid, NnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    /// Input weights per gate, `hidden × input`.
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_c: Matrix,
    /// Recurrent weights per gate, `hidden × hidden`.
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_c: Matrix,
    /// Biases per gate, length `hidden`.
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
}

impl LstmWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_i: Matrix::zeros(hidden, input),
            w_f: Matrix::zeros(hidden, input),
            w_o: Matrix::zeros(hidden, input),
            w_c: Matrix::zeros(hidden, input),
            u_i: Matrix::zeros(hidden, hidden),
            u_f: Matrix::zeros(hidden, hidden),
            u_o: Matrix::zeros(hidden, hidden),
            u_c: Matrix::zeros(hidden, hidden),
            b_i: vec![0.0; hidden],
            b_f: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_i.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_i.cols()
    }

    pub(crate) fn check_shapes(&self) -> Result<(), NnError> {
        let (h, x) = (self.hidden_size(), self.input_size());
        let w_ok = [&self.w_i, &self.w_f, &self.w_o, &self.w_c]
            .iter()
            .all(|m| m.rows() == h && m.cols() == x);
        let u_ok = [&self.u_i, &self.u_f, &self.u_o, &self.u_c]
            .iter()
            .all(|m| m.rows() == h && m.cols() == h);
        let b_ok = [&self.b_i, &self.b_f, &self.b_o, &self.b_c]
            .iter()
            .all(|b| b.len() == h);
        if w_ok && u_ok && b_ok {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch(
                "inconsistent LSTM weight shapes".into(),
            ))
        }
    }
}

/// One LSTM step: `(h_t, c_t)` from the input, previous hidden state, and
/// previous cell state.
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w: &LstmWeights,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    w.check_shapes()?;
    let hidden = w.hidden_size();
    if x.len() != w.input_size() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(NnError::ShapeMismatch(format!(
            "lstm cell expects input {} and state {hidden}, got input {} / hidden {} / cell {}",
            w.input_size(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }

    let mut a_i = w.b_i.clone();
    w.w_i.matvec_add(x, &mut a_i);
    w.u_i.matvec_add(h_prev, &mut a_i);
    let mut a_f = w.b_f.clone();
    w.w_f.matvec_add(x, &mut a_f);
    w.u_f.matvec_add(h_prev, &mut a_f);
    let mut a_o = w.b_o.clone();
    w.w_o.matvec_add(x, &mut a_o);
    w.u_o.matvec_add(h_prev, &mut a_o);
    let mut a_g = w.b_c.clone();
    w.w_c.matvec_add(x, &mut a_g);
    w.u_c.matvec_add(h_prev, &mut a_g);

    let mut c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sigmoid(a_i[j]);
        let f = sigmoid(a_f[j]);
        let o = sigmoid(a_o[j]);
        let g = a_g[j].tanh();
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    Ok((h, c))
}

/// Per-step activations of a whole unrolled sequence, stored step-major in
/// flat buffers (`steps × hidden`).
pub(crate) struct LstmTrace {
    hidden: usize,
    steps: usize,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

impl LstmTrace {
    pub fn last_h(&self) -> &[f64] {
        &self.h[(self.steps - 1) * self.hidden..]
    }
}

/// Runs the cell over a univariate sequence from zero initial states,
/// keeping every step for the backward pass. Input weights collapse to a
/// single column since the input is scalar per step.
pub(crate) fn lstm_sequence_forward(history: &[f64], w: &LstmWeights) -> LstmTrace {
    debug_assert_eq!(w.input_size(), 1);
    let n = w.hidden_size();
    let steps = history.len();
    let mut trace = LstmTrace {
        hidden: n,
        steps,
        i: vec![0.0; steps * n],
        f: vec![0.0; steps * n],
        o: vec![0.0; steps * n],
        g: vec![0.0; steps * n],
        c: vec![0.0; steps * n],
        h: vec![0.0; steps * n],
    };

    let (wi, wf, wo, wc) = (
        w.w_i.as_slice(),
        w.w_f.as_slice(),
        w.w_o.as_slice(),
        w.w_c.as_slice(),
    );
    let mut h_prev = vec![0.0; n];
    let mut c_prev = vec![0.0; n];
    let mut a_i = vec![0.0; n];
    let mut a_f = vec![0.0; n];
    let mut a_o = vec![0.0; n];
    let mut a_g = vec![0.0; n];

    for (t, &x) in history.iter().enumerate() {
        for j in 0..n {
            a_i[j] = w.b_i[j] + wi[j] * x;
            a_f[j] = w.b_f[j] + wf[j] * x;
            a_o[j] = w.b_o[j] + wo[j] * x;
            a_g[j] = w.b_c[j] + wc[j] * x;
        }
        w.u_i.matvec_add(&h_prev, &mut a_i);
        w.u_f.matvec_add(&h_prev, &mut a_f);
        w.u_o.matvec_add(&h_prev, &mut a_o);
        w.u_c.matvec_add(&h_prev, &mut a_g);

        let base = t * n;
        for j in 0..n {
            let i = sigmoid(a_i[j]);
            let f = sigmoid(a_f[j]);
            let o = sigmoid(a_o[j]);
            let g = a_g[j].tanh();
            let c = f * c_prev[j] + i * g;
            let h = o * c.tanh();
            trace.i[base + j] = i;
            trace.f[base + j] = f;
            trace.o[base + j] = o;
            trace.g[base + j] = g;
            trace.c[base + j] = c;
            trace.h[base + j] = h;
            c_prev[j] = c;
            h_prev[j] = h;
        }
    }
    trace
}

/// Backpropagation through time. `d_h_last` is the loss gradient w.r.t.
/// the final hidden state; parameter gradients accumulate into `grads`.
pub(crate) fn lstm_sequence_backward(
    history: &[f64],
    trace: &LstmTrace,
    w: &LstmWeights,
    d_h_last: &[f64],
    grads: &mut LstmWeights,
) {
    let n = trace.hidden;
    let zero = vec![0.0; n];
    let mut d_h = d_h_last.to_vec();
    let mut d_c = vec![0.0; n];
    let mut da_i = vec![0.0; n];
    let mut da_f = vec![0.0; n];
    let mut da_o = vec![0.0; n];
    let mut da_g = vec![0.0; n];

    // Input weights are a single column for the scalar input.
    let (gwi, gwf, gwo, gwc) = (
        grads.w_i.as_mut_slice(),
        grads.w_f.as_mut_slice(),
        grads.w_o.as_mut_slice(),
        grads.w_c.as_mut_slice(),
    );

    for t in (0..trace.steps).rev() {
        let base = t * n;
        let (h_prev, c_prev) = if t == 0 {
            (&zero[..], &zero[..])
        } else {
            (&trace.h[base - n..base], &trace.c[base - n..base])
        };

        for j in 0..n {
            let i = trace.i[base + j];
            let f = trace.f[base + j];
            let o = trace.o[base + j];
            let g = trace.g[base + j];
            let tanh_c = trace.c[base + j].tanh();
            // h = o ∘ tanh(c)
            let d_o = d_h[j] * tanh_c;
            let dc = d_c[j] + d_h[j] * o * (1.0 - tanh_c * tanh_c);
            // c = f ∘ c_prev + i ∘ g
            da_i[j] = dc * g * i * (1.0 - i);
            da_f[j] = dc * c_prev[j] * f * (1.0 - f);
            da_o[j] = d_o * o * (1.0 - o);
            da_g[j] = dc * i * (1.0 - g * g);
            d_c[j] = dc * f;
        }

        let x = history[t];
        for j in 0..n {
            gwi[j] += da_i[j] * x;
            gwf[j] += da_f[j] * x;
            gwo[j] += da_o[j] * x;
            gwc[j] += da_g[j] * x;
            grads.b_i[j] += da_i[j];
            grads.b_f[j] += da_f[j];
            grads.b_o[j] += da_o[j];
            grads.b_c[j] += da_g[j];
        }
        grads.u_i.outer_add(&da_i, h_prev);
        grads.u_f.outer_add(&da_f, h_prev);
        grads.u_o.outer_add(&da_o, h_prev);
        grads.u_c.outer_add(&da_g, h_prev);

        d_h.fill(0.0);
        w.u_i.matvec_transpose_add(&da_i, &mut d_h);
        w.u_f.matvec_transpose_add(&da_f, &mut d_h);
        w.u_o.matvec_transpose_add(&da_o, &mut d_h);
        w.u_c.matvec_transpose_add(&da_g, &mut d_h);
    }
}
