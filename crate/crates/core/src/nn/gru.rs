//! GRU cell and its unrolled forward/backward passes.
//!
//! Standard formulation: update gate `z` and reset gate `r` are logistic,
//! the candidate is `tanh(W x + U (r ∘ h_{t-1}) + b)`, and
//! `h_t = (1 - z) ∘ h_{t-1} + z ∘ ĥ`.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::{sigmoid, NnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    /// Input weights, `hidden × input`: update gate, reset gate, candidate.
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    /// Recurrent weights, `hidden × hidden`.
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    /// Biases, length `hidden`.
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Matrix::zeros(hidden, input),
            w_r: Matrix::zeros(hidden, input),
            w_h: Matrix::zeros(hidden, input),
            u_z: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols()
    }

    pub(crate) fn check_shapes(&self) -> Result<(), NnError> {
        let (h, x) = (self.hidden_size(), self.input_size());
        let w_ok = [&self.w_z, &self.w_r, &self.w_h]
            .iter()
            .all(|m| m.rows() == h && m.cols() == x);
        let u_ok = [&self.u_z, &self.u_r, &self.u_h]
            .iter()
            .all(|m| m.rows() == h && m.cols() == h);
        let b_ok = [&self.b_z, &self.b_r, &self.b_h]
            .iter()
            .all(|b| b.len() == h);
        if w_ok && u_ok && b_ok {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch(
                "inconsistent GRU weight shapes".into(),
            ))
        }
    }
}

/// One GRU step: next hidden state from the input and previous hidden state.
pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], w: &GruWeights) -> Result<Vec<f64>, NnError> {
    w.check_shapes()?;
    let hidden = w.hidden_size();
    if x.len() != w.input_size() || h_prev.len() != hidden {
        return Err(NnError::ShapeMismatch(format!(
            "gru cell expects input {} and state {hidden}, got input {} / hidden {}",
            w.input_size(),
            x.len(),
            h_prev.len()
        )));
    }

    let mut a_z = w.b_z.clone();
    w.w_z.matvec_add(x, &mut a_z);
    w.u_z.matvec_add(h_prev, &mut a_z);
    let mut a_r = w.b_r.clone();
    w.w_r.matvec_add(x, &mut a_r);
    w.u_r.matvec_add(h_prev, &mut a_r);

    let z: Vec<f64> = a_z.iter().map(|&v| sigmoid(v)).collect();
    let r: Vec<f64> = a_r.iter().map(|&v| sigmoid(v)).collect();

    let gated: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
    let mut a_h = w.b_h.clone();
    w.w_h.matvec_add(x, &mut a_h);
    w.u_h.matvec_add(&gated, &mut a_h);

    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        let cand = a_h[j].tanh();
        h[j] = (1.0 - z[j]) * h_prev[j] + z[j] * cand;
    }
    Ok(h)
}

/// Per-step activations stored step-major in flat buffers.
pub(crate) struct GruTrace {
    hidden: usize,
    steps: usize,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    h: Vec<f64>,
}

impl GruTrace {
    pub fn last_h(&self) -> &[f64] {
        &self.h[(self.steps - 1) * self.hidden..]
    }
}

pub(crate) fn gru_sequence_forward(history: &[f64], w: &GruWeights) -> GruTrace {
    debug_assert_eq!(w.input_size(), 1);
    let n = w.hidden_size();
    let steps = history.len();
    let mut trace = GruTrace {
        hidden: n,
        steps,
        z: vec![0.0; steps * n],
        r: vec![0.0; steps * n],
        cand: vec![0.0; steps * n],
        h: vec![0.0; steps * n],
    };

    let (wz, wr, wh) = (w.w_z.as_slice(), w.w_r.as_slice(), w.w_h.as_slice());
    let mut h_prev = vec![0.0; n];
    let mut a_z = vec![0.0; n];
    let mut a_r = vec![0.0; n];
    let mut a_h = vec![0.0; n];
    let mut gated = vec![0.0; n];

    for (t, &x) in history.iter().enumerate() {
        for j in 0..n {
            a_z[j] = w.b_z[j] + wz[j] * x;
            a_r[j] = w.b_r[j] + wr[j] * x;
            a_h[j] = w.b_h[j] + wh[j] * x;
        }
        w.u_z.matvec_add(&h_prev, &mut a_z);
        w.u_r.matvec_add(&h_prev, &mut a_r);

        let base = t * n;
        for j in 0..n {
            let z = sigmoid(a_z[j]);
            let r = sigmoid(a_r[j]);
            trace.z[base + j] = z;
            trace.r[base + j] = r;
            gated[j] = r * h_prev[j];
        }
        w.u_h.matvec_add(&gated, &mut a_h);
        for j in 0..n {
            let cand = a_h[j].tanh();
            let h = (1.0 - trace.z[base + j]) * h_prev[j] + trace.z[base + j] * cand;
            trace.cand[base + j] = cand;
            trace.h[base + j] = h;
            h_prev[j] = h;
        }
    }
    trace
}

pub(crate) fn gru_sequence_backward(
    history: &[f64],
    trace: &GruTrace,
    w: &GruWeights,
    d_h_last: &[f64],
    grads: &mut GruWeights,
) {
    let n = trace.hidden;
    let zero = vec![0.0; n];
    let mut d_h = d_h_last.to_vec();
    let mut da_z = vec![0.0; n];
    let mut da_r = vec![0.0; n];
    let mut da_h = vec![0.0; n];
    let mut d_gated = vec![0.0; n];
    let mut gated = vec![0.0; n];
    let mut d_h_prev = vec![0.0; n];

    let (gwz, gwr, gwh) = (
        grads.w_z.as_mut_slice(),
        grads.w_r.as_mut_slice(),
        grads.w_h.as_mut_slice(),
    );

    for t in (0..trace.steps).rev() {
        let base = t * n;
        let h_prev = if t == 0 {
            &zero[..]
        } else {
            &trace.h[base - n..base]
        };

        for j in 0..n {
            let z = trace.z[base + j];
            let cand = trace.cand[base + j];
            // h = (1 - z) ∘ h_prev + z ∘ cand
            let d_z = d_h[j] * (cand - h_prev[j]);
            let d_cand = d_h[j] * z;
            d_h_prev[j] = d_h[j] * (1.0 - z);
            da_z[j] = d_z * z * (1.0 - z);
            da_h[j] = d_cand * (1.0 - cand * cand);
        }

        // Candidate pre-activation saw U_h (r ∘ h_prev).
        d_gated.fill(0.0);
        w.u_h.matvec_transpose_add(&da_h, &mut d_gated);
        for j in 0..n {
            let r = trace.r[base + j];
            da_r[j] = d_gated[j] * h_prev[j] * r * (1.0 - r);
            d_h_prev[j] += d_gated[j] * r;
            gated[j] = r * h_prev[j];
        }

        let x = history[t];
        for j in 0..n {
            gwz[j] += da_z[j] * x;
            gwr[j] += da_r[j] * x;
            gwh[j] += da_h[j] * x;
            grads.b_z[j] += da_z[j];
            grads.b_r[j] += da_r[j];
            grads.b_h[j] += da_h[j];
        }
        grads.u_z.outer_add(&da_z, h_prev);
        grads.u_r.outer_add(&da_r, h_prev);
        grads.u_h.outer_add(&da_h, &gated);

        w.u_z.matvec_transpose_add(&da_z, &mut d_h_prev);
        w.u_r.matvec_transpose_add(&da_r, &mut d_h_prev);
        std::mem::swap(&mut d_h, &mut d_h_prev);
    }
}
