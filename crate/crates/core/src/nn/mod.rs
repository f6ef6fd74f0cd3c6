//! Forecasting models: LSTM, GRU, and 1D-CNN encoders, each feeding a
//! dense head that emits the whole forecast horizon at once.
//!
//! Gradients are exact analytic reverse accumulation through every time
//! step and layer, in double precision throughout, so they can be checked
//! against central finite differences.

mod conv;
mod gru;
mod lstm;
mod matrix;

pub use conv::{conv1d_forward, Conv1dWeights, ConvLayer};
pub use gru::{gru_cell_forward, GruWeights};
pub use lstm::{lstm_cell_forward, LstmWeights};
pub use matrix::Matrix;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid hyperparameters: {0}")]
    BadHyper(String),
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The three supported forecaster families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// LSTM encoder with a fully connected output head.
    #[serde(rename = "FC_LSTM")]
    FcLstm,
    #[serde(rename = "GRU")]
    Gru,
    #[serde(rename = "1D_CNN")]
    Cnn1d,
}

impl Architecture {
    pub const ALL: [Architecture; 3] =
        [Architecture::FcLstm, Architecture::Gru, Architecture::Cnn1d];

    pub fn label(&self) -> &'static str {
        match self {
            Architecture::FcLstm => "FC_LSTM",
            Architecture::Gru => "GRU",
            Architecture::Cnn1d => "1D_CNN",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FC_LSTM" => Ok(Architecture::FcLstm),
            "GRU" => Ok(Architecture::Gru),
            "1D_CNN" => Ok(Architecture::Cnn1d),
            other => Err(format!(
                "unknown architecture `{other}` (expected FC_LSTM, GRU, or 1D_CNN)"
            )),
        }
    }
}

/// Model shape parameters. The univariate pipeline fixes `input_size` to 1;
/// recurrent models use `hidden_size`, the CNN uses `conv_channels`,
/// `kernel_width`, and `conv_layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub architecture: Architecture,
    pub input_size: usize,
    pub hidden_size: usize,
    pub conv_channels: usize,
    pub kernel_width: usize,
    pub conv_layers: usize,
    /// History length H fed to the encoder.
    pub lookback: usize,
    /// Forecast length P emitted by the head.
    pub horizon: usize,
}

impl HyperParams {
    /// Defaults: hidden size 64 for the recurrent models; two conv layers
    /// of 32 channels with kernel width 5 for the CNN.
    pub fn new(architecture: Architecture, lookback: usize, horizon: usize) -> Self {
        Self {
            architecture,
            input_size: 1,
            hidden_size: 64,
            conv_channels: 32,
            kernel_width: 5,
            conv_layers: 2,
            lookback,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_size != 1 {
            return Err(NnError::BadHyper(
                "input_size must be 1 for the univariate pipeline".into(),
            ));
        }
        if self.lookback == 0 || self.horizon == 0 {
            return Err(NnError::BadHyper(
                "lookback and horizon must be at least 1".into(),
            ));
        }
        match self.architecture {
            Architecture::FcLstm | Architecture::Gru => {
                if self.hidden_size == 0 {
                    return Err(NnError::BadHyper("hidden_size must be at least 1".into()));
                }
            }
            Architecture::Cnn1d => {
                if self.conv_channels == 0 || self.conv_layers == 0 {
                    return Err(NnError::BadHyper(
                        "conv_channels and conv_layers must be at least 1".into(),
                    ));
                }
                if self.kernel_width == 0 || self.kernel_width.is_multiple_of(2) {
                    return Err(NnError::BadHyper(format!(
                        "kernel_width must be odd and positive, got {}",
                        self.kernel_width
                    )));
                }
                if self.lookback <= self.conv_shrink() {
                    return Err(NnError::BadHyper(format!(
                        "lookback {} too short for {} conv layers of kernel width {}",
                        self.lookback, self.conv_layers, self.kernel_width
                    )));
                }
            }
        }
        Ok(())
    }

    fn conv_shrink(&self) -> usize {
        self.conv_layers * (self.kernel_width - 1)
    }

    /// Width of the representation handed to the dense head.
    pub fn feature_size(&self) -> usize {
        match self.architecture {
            Architecture::FcLstm | Architecture::Gru => self.hidden_size,
            Architecture::Cnn1d => self.conv_channels * (self.lookback - self.conv_shrink()),
        }
    }
}

/// Dense output layer mapping the encoder representation to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `horizon × feature` weight matrix.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArchWeights {
    #[serde(rename = "FC_LSTM")]
    Lstm(LstmWeights),
    #[serde(rename = "GRU")]
    Gru(GruWeights),
    #[serde(rename = "1D_CNN")]
    Conv(Conv1dWeights),
}

/// Full parameter set of one forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub hyper: HyperParams,
    pub arch: ArchWeights,
    pub head: Dense,
}

impl ModelWeights {
    /// All-zero parameters for the given shape.
    pub fn zeros(hyper: &HyperParams) -> Result<Self, NnError> {
        hyper.validate()?;
        let arch = match hyper.architecture {
            Architecture::FcLstm => {
                ArchWeights::Lstm(LstmWeights::zeros(hyper.input_size, hyper.hidden_size))
            }
            Architecture::Gru => {
                ArchWeights::Gru(GruWeights::zeros(hyper.input_size, hyper.hidden_size))
            }
            Architecture::Cnn1d => ArchWeights::Conv(Conv1dWeights::zeros(
                hyper.input_size,
                hyper.conv_channels,
                hyper.kernel_width,
                hyper.conv_layers,
            )),
        };
        Ok(Self {
            head: Dense {
                weights: Matrix::zeros(hyper.horizon, hyper.feature_size()),
                bias: vec![0.0; hyper.horizon],
            },
            hyper: hyper.clone(),
            arch,
        })
    }

    /// Zero-filled parameters with the same shape, used as a gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.hyper).expect("existing weights imply valid hyperparameters")
    }

    /// Parameter tensors as flat slices, in the canonical order used by
    /// initialization, optimizer state, and gradient reduction:
    /// gate input weights, gate recurrent weights, gate biases (or, for the
    /// CNN, each layer's kernels then bias), then head weights and bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut slices: Vec<&[f64]> = Vec::new();
        match &self.arch {
            ArchWeights::Lstm(w) => {
                for m in [
                    &w.w_i, &w.w_f, &w.w_o, &w.w_c, &w.u_i, &w.u_f, &w.u_o, &w.u_c,
                ] {
                    slices.push(m.as_slice());
                }
                for b in [&w.b_i, &w.b_f, &w.b_o, &w.b_c] {
                    slices.push(b);
                }
            }
            ArchWeights::Gru(w) => {
                for m in [&w.w_z, &w.w_r, &w.w_h, &w.u_z, &w.u_r, &w.u_h] {
                    slices.push(m.as_slice());
                }
                for b in [&w.b_z, &w.b_r, &w.b_h] {
                    slices.push(b);
                }
            }
            ArchWeights::Conv(w) => {
                for layer in &w.layers {
                    for kernel in &layer.kernels {
                        slices.push(kernel.as_slice());
                    }
                    slices.push(&layer.bias);
                }
            }
        }
        slices.push(self.head.weights.as_slice());
        slices.push(&self.head.bias);
        slices
    }

    /// Mutable view of the same tensors, in the same canonical order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices: Vec<&mut [f64]> = Vec::new();
        match &mut self.arch {
            ArchWeights::Lstm(w) => {
                for m in [
                    &mut w.w_i, &mut w.w_f, &mut w.w_o, &mut w.w_c, &mut w.u_i, &mut w.u_f,
                    &mut w.u_o, &mut w.u_c,
                ] {
                    slices.push(m.as_mut_slice());
                }
                for b in [&mut w.b_i, &mut w.b_f, &mut w.b_o, &mut w.b_c] {
                    slices.push(b);
                }
            }
            ArchWeights::Gru(w) => {
                for m in [
                    &mut w.w_z, &mut w.w_r, &mut w.w_h, &mut w.u_z, &mut w.u_r, &mut w.u_h,
                ] {
                    slices.push(m.as_mut_slice());
                }
                for b in [&mut w.b_z, &mut w.b_r, &mut w.b_h] {
                    slices.push(b);
                }
            }
            ArchWeights::Conv(w) => {
                for layer in &mut w.layers {
                    for kernel in &mut layer.kernels {
                        slices.push(kernel.as_mut_slice());
                    }
                    slices.push(&mut layer.bias);
                }
            }
        }
        slices.push(self.head.weights.as_mut_slice());
        slices.push(&mut self.head.bias);
        slices
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Checks that every tensor shape is consistent with the declared
    /// hyperparameters and that every entry is finite.
    pub fn validate(&self) -> Result<(), NnError> {
        self.check_shapes()?;
        for slice in self.param_slices() {
            if slice.iter().any(|v| !v.is_finite()) {
                return Err(NnError::ShapeMismatch("non-finite parameter value".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn check_shapes(&self) -> Result<(), NnError> {
        self.hyper.validate()?;
        match (&self.arch, self.hyper.architecture) {
            (ArchWeights::Lstm(w), Architecture::FcLstm) => {
                w.check_shapes()?;
                if w.input_size() != self.hyper.input_size
                    || w.hidden_size() != self.hyper.hidden_size
                {
                    return Err(NnError::ShapeMismatch(
                        "LSTM weights disagree with hyperparameters".into(),
                    ));
                }
            }
            (ArchWeights::Gru(w), Architecture::Gru) => {
                w.check_shapes()?;
                if w.input_size() != self.hyper.input_size
                    || w.hidden_size() != self.hyper.hidden_size
                {
                    return Err(NnError::ShapeMismatch(
                        "GRU weights disagree with hyperparameters".into(),
                    ));
                }
            }
            (ArchWeights::Conv(w), Architecture::Cnn1d) => {
                w.check_shapes()?;
                let consistent = w.layers.len() == self.hyper.conv_layers
                    && w.layers[0].in_channels() == self.hyper.input_size
                    && w.layers.iter().all(|l| {
                        l.out_channels() == self.hyper.conv_channels
                            && l.kernel_width() == self.hyper.kernel_width
                    });
                if !consistent {
                    return Err(NnError::ShapeMismatch(
                        "conv weights disagree with hyperparameters".into(),
                    ));
                }
            }
            _ => {
                return Err(NnError::ShapeMismatch(
                    "architecture tag does not match stored weights".into(),
                ))
            }
        }
        let feature = self.hyper.feature_size();
        if self.head.weights.rows() != self.hyper.horizon
            || self.head.weights.cols() != feature
            || self.head.bias.len() != self.hyper.horizon
        {
            return Err(NnError::ShapeMismatch(format!(
                "head must be {} × {feature} with {} biases",
                self.hyper.horizon, self.hyper.horizon
            )));
        }
        Ok(())
    }
}

/// Glorot-uniform initialization, fully determined by `seed`.
///
/// Matrices draw uniformly from `±sqrt(6 / (fan_in + fan_out))` in the
/// canonical parameter order, row-major within each tensor; conv kernels
/// use the receptive-field fans `in_channels * kernel_width` and
/// `out_channels * kernel_width`. Biases start at zero except the LSTM
/// forget-gate bias, which starts at 1.
pub fn init_weights(hyper: &HyperParams, seed: u64) -> Result<ModelWeights, NnError> {
    let mut model = ModelWeights::zeros(hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |m: &mut Matrix, fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in m.as_mut_slice() {
            *v = bound * (2.0 * rng.random::<f64>() - 1.0);
        }
    };

    let (input, hidden) = (hyper.input_size, hyper.hidden_size);
    match &mut model.arch {
        ArchWeights::Lstm(w) => {
            for m in [&mut w.w_i, &mut w.w_f, &mut w.w_o, &mut w.w_c] {
                fill(m, input, hidden);
            }
            for m in [&mut w.u_i, &mut w.u_f, &mut w.u_o, &mut w.u_c] {
                fill(m, hidden, hidden);
            }
            // Unit forget bias keeps early cell memory alive.
            w.b_f.fill(1.0);
        }
        ArchWeights::Gru(w) => {
            for m in [&mut w.w_z, &mut w.w_r, &mut w.w_h] {
                fill(m, input, hidden);
            }
            for m in [&mut w.u_z, &mut w.u_r, &mut w.u_h] {
                fill(m, hidden, hidden);
            }
        }
        ArchWeights::Conv(w) => {
            for layer in &mut w.layers {
                let fan_in = layer.in_channels() * layer.kernel_width();
                let fan_out = layer.out_channels() * layer.kernel_width();
                for kernel in &mut layer.kernels {
                    fill(kernel, fan_in, fan_out);
                }
            }
        }
    }
    fill(&mut model.head.weights, hyper.feature_size(), hyper.horizon);
    Ok(model)
}

fn check_history(history: &[f64], hyper: &HyperParams) -> Result<(), NnError> {
    if history.len() != hyper.lookback {
        return Err(NnError::ShapeMismatch(format!(
            "history length {} does not match lookback {}",
            history.len(),
            hyper.lookback
        )));
    }
    Ok(())
}

fn head_forward(head: &Dense, features: &[f64]) -> Vec<f64> {
    let mut out = head.bias.clone();
    head.weights.matvec_add(features, &mut out);
    out
}

/// Predicts `horizon` values from `lookback` history samples.
///
/// Recurrent models run their cell across the whole history from zero
/// initial states and feed the final hidden state to the head; the CNN
/// stacks its conv layers, flattens channel-major, and feeds the head.
pub fn forward(history: &[f64], weights: &ModelWeights) -> Result<Vec<f64>, NnError> {
    weights.check_shapes()?;
    check_history(history, &weights.hyper)?;
    let features = match &weights.arch {
        ArchWeights::Lstm(w) => lstm::lstm_sequence_forward(history, w).last_h().to_vec(),
        ArchWeights::Gru(w) => gru::gru_sequence_forward(history, w).last_h().to_vec(),
        ArchWeights::Conv(w) => {
            let input = Matrix::from_fn(1, history.len(), |_, c| history[c]);
            let trace = conv::conv_sequence_forward(&input, w)?;
            trace.output().as_slice().to_vec()
        }
    };
    Ok(head_forward(&weights.head, &features))
}

/// Loss and exact parameter gradients for one window.
#[derive(Debug, Clone)]
pub struct BackpropOutput {
    /// Mean squared error over the horizon.
    pub loss: f64,
    /// Gradient of the loss for every parameter, shaped like the model.
    pub gradients: ModelWeights,
}

/// Computes the horizon-mean squared error against `target` and its exact
/// gradient w.r.t. every parameter by reverse accumulation through all
/// time steps and layers.
pub fn backward(
    history: &[f64],
    weights: &ModelWeights,
    target: &[f64],
) -> Result<BackpropOutput, NnError> {
    weights.check_shapes()?;
    check_history(history, &weights.hyper)?;
    let horizon = weights.hyper.horizon;
    if target.len() != horizon {
        return Err(NnError::ShapeMismatch(format!(
            "target length {} does not match horizon {horizon}",
            target.len()
        )));
    }

    let mut gradients = weights.zeros_like();

    // Forward with cached activations, then the head.
    enum Trace {
        Lstm(lstm::LstmTrace),
        Gru(gru::GruTrace),
        Conv(conv::ConvTrace),
    }
    let (trace, features) = match &weights.arch {
        ArchWeights::Lstm(w) => {
            let trace = lstm::lstm_sequence_forward(history, w);
            let h = trace.last_h().to_vec();
            (Trace::Lstm(trace), h)
        }
        ArchWeights::Gru(w) => {
            let trace = gru::gru_sequence_forward(history, w);
            let h = trace.last_h().to_vec();
            (Trace::Gru(trace), h)
        }
        ArchWeights::Conv(w) => {
            let input = Matrix::from_fn(1, history.len(), |_, c| history[c]);
            let trace = conv::conv_sequence_forward(&input, w)?;
            let features = trace.output().as_slice().to_vec();
            (Trace::Conv(trace), features)
        }
    };
    let prediction = head_forward(&weights.head, &features);

    // MSE over the horizon and its gradient w.r.t. the prediction.
    let mut loss = 0.0;
    let mut d_y = vec![0.0; horizon];
    for j in 0..horizon {
        let diff = prediction[j] - target[j];
        loss += diff * diff;
        d_y[j] = 2.0 * diff / horizon as f64;
    }
    loss /= horizon as f64;

    // Head gradients and the gradient flowing into the encoder features.
    gradients.head.weights.outer_add(&d_y, &features);
    for (g, d) in gradients.head.bias.iter_mut().zip(&d_y) {
        *g += d;
    }
    let mut d_features = vec![0.0; features.len()];
    weights
        .head
        .weights
        .matvec_transpose_add(&d_y, &mut d_features);

    match (&weights.arch, &mut gradients.arch, trace) {
        (ArchWeights::Lstm(w), ArchWeights::Lstm(g), Trace::Lstm(trace)) => {
            lstm::lstm_sequence_backward(history, &trace, w, &d_features, g);
        }
        (ArchWeights::Gru(w), ArchWeights::Gru(g), Trace::Gru(trace)) => {
            gru::gru_sequence_backward(history, &trace, w, &d_features, g);
        }
        (ArchWeights::Conv(w), ArchWeights::Conv(g), Trace::Conv(trace)) => {
            let last = trace.preacts.last().expect("at least one conv layer");
            let d_out = Matrix::from_fn(last.rows(), last.cols(), |r, c| {
                d_features[r * last.cols() + c]
            });
            conv::conv_sequence_backward(&trace, w, &d_out, g);
        }
        _ => unreachable!("trace kind always matches architecture"),
    }

    Ok(BackpropOutput { loss, gradients })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_hyper(architecture: Architecture) -> HyperParams {
        HyperParams {
            architecture,
            input_size: 1,
            hidden_size: 3,
            conv_channels: 2,
            kernel_width: 3,
            conv_layers: 2,
            lookback: 9,
            horizon: 2,
        }
    }

    #[test]
    fn zero_weights_forward_emits_head_bias() {
        for architecture in Architecture::ALL {
            let hyper = small_hyper(architecture);
            let mut model = ModelWeights::zeros(&hyper).unwrap();
            model.head.bias = vec![0.25, -1.5];
            let history = vec![0.4; hyper.lookback];
            let out = forward(&history, &model).unwrap();
            assert_eq!(out, vec![0.25, -1.5], "{architecture}");
        }
    }

    #[test]
    fn forward_output_length_is_horizon() {
        for architecture in Architecture::ALL {
            let mut hyper = small_hyper(architecture);
            hyper.horizon = 4;
            let model = init_weights(&hyper, 11).unwrap();
            let history: Vec<f64> = (0..hyper.lookback).map(|i| i as f64 / 10.0).collect();
            assert_eq!(forward(&history, &model).unwrap().len(), 4);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        for architecture in Architecture::ALL {
            let hyper = small_hyper(architecture);
            let model = init_weights(&hyper, 3).unwrap();
            let history: Vec<f64> = (0..hyper.lookback)
                .map(|i| (i as f64 * 0.7).sin().abs())
                .collect();
            let a = forward(&history, &model).unwrap();
            let b = forward(&history, &model).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn forward_rejects_wrong_history_length() {
        let model = init_weights(&small_hyper(Architecture::FcLstm), 0).unwrap();
        assert!(matches!(
            forward(&[0.0; 5], &model),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    // Scripted scalar oracle for a hand-set hidden-1 GRU with a single
    // output: unrolls the gate equations step by step, then the head.
    #[test]
    fn scalar_model_forward_matches_scripted_oracle() {
        let hyper = HyperParams {
            architecture: Architecture::Gru,
            input_size: 1,
            hidden_size: 1,
            conv_channels: 1,
            kernel_width: 3,
            conv_layers: 1,
            lookback: 3,
            horizon: 1,
        };
        let mut model = ModelWeights::zeros(&hyper).unwrap();
        let (wz, wr, wh, uz, ur, uh) = (0.8, -0.3, 1.1, 0.4, -0.6, 0.9);
        let (head_w, head_b) = (1.7, 0.05);
        if let ArchWeights::Gru(w) = &mut model.arch {
            w.w_z.set(0, 0, wz);
            w.w_r.set(0, 0, wr);
            w.w_h.set(0, 0, wh);
            w.u_z.set(0, 0, uz);
            w.u_r.set(0, 0, ur);
            w.u_h.set(0, 0, uh);
        }
        model.head.weights.set(0, 0, head_w);
        model.head.bias[0] = head_b;

        let history = [0.2, 0.7, 0.5];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = 0.0;
        for x in history {
            let z = sig(wz * x + uz * h);
            let r = sig(wr * x + ur * h);
            let cand = (wh * x + uh * (r * h)).tanh();
            h = (1.0 - z) * h + z * cand;
        }
        let expected = head_w * h + head_b;

        let out = forward(&history, &model).unwrap();
        assert_eq!(out.len(), 1);
        assert!(
            (out[0] - expected).abs() < 1e-12,
            "{} vs {expected}",
            out[0]
        );
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        for architecture in Architecture::ALL {
            let hyper = small_hyper(architecture);
            let a = init_weights(&hyper, 42).unwrap();
            let b = init_weights(&hyper, 42).unwrap();
            assert_eq!(a, b);

            let c = init_weights(&hyper, 43).unwrap();
            let equal_entries = a
                .param_slices()
                .iter()
                .zip(c.param_slices())
                .flat_map(|(x, y)| x.iter().zip(y.iter()))
                .filter(|(x, y)| x == y)
                .count();
            // Only the deliberately constant biases may coincide.
            let bias_budget = match architecture {
                Architecture::FcLstm => 4 * hyper.hidden_size + hyper.horizon,
                Architecture::Gru => 3 * hyper.hidden_size + hyper.horizon,
                Architecture::Cnn1d => hyper.conv_layers * hyper.conv_channels + hyper.horizon,
            };
            assert!(
                equal_entries <= bias_budget,
                "{architecture}: {equal_entries} equal entries"
            );

            // Glorot bound per tensor family; the loosest bound in these
            // small configs is sqrt(6 / 4).
            let loosest = (6.0f64 / 4.0).sqrt();
            for slice in a.param_slices() {
                assert!(slice.iter().all(|v| v.abs() <= loosest.max(1.0)));
            }
        }
    }

    #[test]
    fn zero_loss_means_zero_gradients() {
        for architecture in Architecture::ALL {
            let hyper = small_hyper(architecture);
            let model = init_weights(&hyper, 5).unwrap();
            let history: Vec<f64> = (0..hyper.lookback).map(|i| i as f64 / 9.0).collect();
            let target = forward(&history, &model).unwrap();
            let out = backward(&history, &model, &target).unwrap();
            assert!(out.loss.abs() < 1e-24);
            for slice in out.gradients.param_slices() {
                assert!(slice.iter().all(|&g| g == 0.0), "{architecture}");
            }
        }
    }

    #[test]
    fn head_bias_gradient_matches_hand_derivative() {
        // d loss / d bias_j = (2 / P) (y_j - t_j); with zero weights the
        // prediction is exactly the bias.
        let hyper = small_hyper(Architecture::Gru);
        let mut model = ModelWeights::zeros(&hyper).unwrap();
        model.head.bias = vec![1.0, 2.0];
        let history = vec![0.3; hyper.lookback];
        let out = backward(&history, &model, &[0.0, 4.0]).unwrap();
        let bias_grad = *out.gradients.param_slices().last().unwrap();
        assert!((bias_grad[0] - 1.0).abs() < 1e-15); // (2/2)(1-0)
        assert!((bias_grad[1] + 2.0).abs() < 1e-15); // (2/2)(2-4)
        assert!((out.loss - (1.0 + 4.0) / 2.0).abs() < 1e-15);
    }

    /// Central finite differences over every parameter of a small model.
    ///
    /// Differencing only estimates a derivative at differentiable points,
    /// so every parameter (biases included) gets a small random offset
    /// first: zero-initialized conv biases would otherwise sit exactly on
    /// the ReLU kink whenever an upstream layer goes fully inactive.
    fn finite_difference_check(architecture: Architecture, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        let hyper = small_hyper(architecture);
        let mut model = init_weights(&hyper, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for slice in model.param_slices_mut() {
            for v in slice {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let history: Vec<f64> = (0..hyper.lookback)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let target: Vec<f64> = (0..hyper.horizon)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();

        let analytic = backward(&history, &model, &target).unwrap().gradients;

        let step = 1e-5;
        let mut worst = 0.0f64;
        let n_tensors = model.param_slices().len();
        for tensor in 0..n_tensors {
            let len = model.param_slices()[tensor].len();
            for idx in 0..len {
                let mut perturbed = model.clone();
                perturbed.param_slices_mut()[tensor][idx] += step;
                let up = {
                    let y = forward(&history, &perturbed).unwrap();
                    y.iter()
                        .zip(&target)
                        .map(|(p, t)| (p - t) * (p - t))
                        .sum::<f64>()
                        / hyper.horizon as f64
                };
                perturbed.param_slices_mut()[tensor][idx] -= 2.0 * step;
                let down = {
                    let y = forward(&history, &perturbed).unwrap();
                    y.iter()
                        .zip(&target)
                        .map(|(p, t)| (p - t) * (p - t))
                        .sum::<f64>()
                        / hyper.horizon as f64
                };
                let numeric = (up - down) / (2.0 * step);
                let exact = analytic.param_slices()[tensor][idx];
                let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for architecture in Architecture::ALL {
            for seed in [1, 2] {
                let worst = finite_difference_check(architecture, seed);
                assert!(
                    worst < 1e-4,
                    "{architecture} seed {seed}: max rel err {worst:.3e}"
                );
            }
        }
    }

    #[test]
    fn checkpointable_weights_round_trip_serde() {
        for architecture in Architecture::ALL {
            let model = init_weights(&small_hyper(architecture), 9).unwrap();
            let json = serde_json::to_string(&model).unwrap();
            let back: ModelWeights = serde_json::from_str(&json).unwrap();
            assert_eq!(back, model);
        }
    }
}
