//! Stacked valid 1-D convolutions with ReLU activations.
//!
//! Each layer computes a cross-correlation (no kernel flip, no padding)
//! per output channel plus a bias, so the sequence shrinks by
//! `kernel_width - 1` per layer.

use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use super::NnError;

/// One convolution layer. `kernels[oc]` is the `in_channels × kernel_width`
/// tap matrix feeding output channel `oc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernels: Vec<Matrix>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_width: usize) -> Self {
        Self {
            kernels: (0..out_channels)
                .map(|_| Matrix::zeros(in_channels, kernel_width))
                .collect(),
            bias: vec![0.0; out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.len()
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.first().map_or(0, Matrix::rows)
    }

    pub fn kernel_width(&self) -> usize {
        self.kernels.first().map_or(0, Matrix::cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1dWeights {
    pub layers: Vec<ConvLayer>,
}

impl Conv1dWeights {
    pub fn zeros(in_channels: usize, channels: usize, kernel_width: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let input = if l == 0 { in_channels } else { channels };
                ConvLayer::zeros(input, channels, kernel_width)
            })
            .collect();
        Self { layers }
    }

    /// Total sequence shrinkage across all layers.
    pub fn receptive_shrink(&self) -> usize {
        self.layers.iter().map(|l| l.kernel_width() - 1).sum()
    }

    pub(crate) fn check_shapes(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::ShapeMismatch("conv stack has no layers".into()));
        }
        let mut in_channels = self.layers[0].in_channels();
        for (idx, layer) in self.layers.iter().enumerate() {
            let kw = layer.kernel_width();
            if layer.kernels.is_empty() || kw == 0 {
                return Err(NnError::ShapeMismatch(format!("conv layer {idx} is empty")));
            }
            if kw % 2 == 0 {
                return Err(NnError::ShapeMismatch(format!(
                    "conv layer {idx} kernel width {kw} must be odd"
                )));
            }
            let consistent = layer
                .kernels
                .iter()
                .all(|k| k.rows() == in_channels && k.cols() == kw);
            if !consistent || layer.bias.len() != layer.out_channels() {
                return Err(NnError::ShapeMismatch(format!(
                    "conv layer {idx} has inconsistent kernel or bias shapes"
                )));
            }
            in_channels = layer.out_channels();
        }
        Ok(())
    }
}

/// Pre-activation cross-correlation of one layer. Inner loops slide whole
/// rows so they vectorize.
pub(crate) fn conv_layer_preact(input: &Matrix, layer: &ConvLayer) -> Matrix {
    let kw = layer.kernel_width();
    let out_len = input.cols() - kw + 1;
    let mut out = Matrix::zeros(layer.out_channels(), out_len);
    for (oc, kernel) in layer.kernels.iter().enumerate() {
        let out_row = out.row_mut(oc);
        out_row.fill(layer.bias[oc]);
        for ic in 0..input.rows() {
            let in_row = input.row(ic);
            for (k, &tap) in kernel.row(ic).iter().enumerate() {
                for (o, &x) in out_row.iter_mut().zip(&in_row[k..k + out_len]) {
                    *o += tap * x;
                }
            }
        }
    }
    out
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Per-layer activations kept for the backward pass: the input to each
/// layer plus each layer's pre-activation.
pub(crate) struct ConvTrace {
    pub inputs: Vec<Matrix>,
    pub preacts: Vec<Matrix>,
}

impl ConvTrace {
    pub fn output(&self) -> Matrix {
        relu(
            self.preacts
                .last()
                .expect("conv stack has at least one layer"),
        )
    }
}

pub(crate) fn conv_sequence_forward(
    input: &Matrix,
    w: &Conv1dWeights,
) -> Result<ConvTrace, NnError> {
    let mut inputs = Vec::with_capacity(w.layers.len());
    let mut preacts = Vec::with_capacity(w.layers.len());
    let mut current = input.clone();
    for (idx, layer) in w.layers.iter().enumerate() {
        if layer.in_channels() != current.rows() {
            return Err(NnError::ShapeMismatch(format!(
                "conv layer {idx} expects {} input channels, got {}",
                layer.in_channels(),
                current.rows()
            )));
        }
        if layer.kernel_width() > current.cols() {
            return Err(NnError::ShapeMismatch(format!(
                "conv layer {idx} kernel width {} exceeds sequence length {}",
                layer.kernel_width(),
                current.cols()
            )));
        }
        let z = conv_layer_preact(&current, layer);
        let a = relu(&z);
        inputs.push(current);
        preacts.push(z);
        current = a;
    }
    Ok(ConvTrace { inputs, preacts })
}

/// Runs the full convolution stack over a multi-channel sequence,
/// returning the post-ReLU features of the last layer.
pub fn conv1d_forward(input: &Matrix, w: &Conv1dWeights) -> Result<Matrix, NnError> {
    w.check_shapes()?;
    Ok(conv_sequence_forward(input, w)?.output())
}

/// Backward through the stack. `d_out` is the gradient w.r.t. the final
/// post-ReLU output; parameter gradients accumulate into `grads` and the
/// gradient w.r.t. the stack input is returned.
pub(crate) fn conv_sequence_backward(
    trace: &ConvTrace,
    w: &Conv1dWeights,
    d_out: &Matrix,
    grads: &mut Conv1dWeights,
) -> Matrix {
    let mut d_act = d_out.clone();
    for l in (0..w.layers.len()).rev() {
        let layer = &w.layers[l];
        let input = &trace.inputs[l];
        let z = &trace.preacts[l];
        let out_len = z.cols();

        // ReLU gate: pass gradient only where the pre-activation was positive.
        let mut d_z = d_act;
        for (dv, &zv) in d_z.as_mut_slice().iter_mut().zip(z.as_slice()) {
            if zv <= 0.0 {
                *dv = 0.0;
            }
        }

        let mut d_input = Matrix::zeros(input.rows(), input.cols());
        let g_layer = &mut grads.layers[l];
        for (oc, kernel) in layer.kernels.iter().enumerate() {
            let dz_row = d_z.row(oc);
            g_layer.bias[oc] += dz_row.iter().sum::<f64>();
            let g_kernel = &mut g_layer.kernels[oc];
            for ic in 0..input.rows() {
                let in_row = input.row(ic);
                let g_row = g_kernel.row_mut(ic);
                for (k, g) in g_row.iter_mut().enumerate() {
                    *g += dot(dz_row, &in_row[k..k + out_len]);
                }
                let dx_row = d_input.row_mut(ic);
                for (k, &tap) in kernel.row(ic).iter().enumerate() {
                    for (dx, &d) in dx_row[k..k + out_len].iter_mut().zip(dz_row) {
                        *dx += tap * d;
                    }
                }
            }
        }
        d_act = d_input;
    }
    d_act
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(kernel: Vec<f64>, bias: f64) -> Conv1dWeights {
        let kw = kernel.len();
        let mut layer = ConvLayer::zeros(1, 1, kw);
        for (k, v) in kernel.into_iter().enumerate() {
            layer.kernels[0].set(0, k, v);
        }
        layer.bias[0] = bias;
        Conv1dWeights {
            layers: vec![layer],
        }
    }

    fn row_input(values: &[f64]) -> Matrix {
        Matrix::from_fn(1, values.len(), |_, c| values[c])
    }

    #[test]
    fn delta_kernel_taps_identity() {
        let w = single_layer(vec![0.0, 1.0, 0.0], 0.0);
        let out = conv1d_forward(&row_input(&[1.0, 2.0, 3.0, 4.0]), &w).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn box_kernel_on_constant_input() {
        let w = single_layer(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.0);
        let pre = conv_layer_preact(&row_input(&[3.0, 3.0, 3.0, 3.0]), &w.layers[0]);
        assert!((pre.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((pre.get(0, 1) - 3.0).abs() < 1e-12);
        assert_eq!(pre.cols(), 2);
    }

    #[test]
    fn relu_clamps_negative_features() {
        let w = single_layer(vec![0.0, -1.0, 0.0], 0.0);
        let out = conv1d_forward(&row_input(&[1.0, 2.0, 3.0, 4.0]), &w).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn output_length_shrinks_per_layer() {
        let w = Conv1dWeights::zeros(1, 3, 5, 2);
        let input = row_input(&[1.0; 20]);
        let out = conv1d_forward(&input, &w).unwrap();
        assert_eq!(out.cols(), 20 - w.receptive_shrink());
        assert_eq!(out.rows(), 3);
    }

    #[test]
    fn rejects_even_kernel_and_short_sequence() {
        let w = Conv1dWeights::zeros(1, 1, 4, 1);
        assert!(matches!(
            conv1d_forward(&row_input(&[1.0; 8]), &w),
            Err(NnError::ShapeMismatch(_))
        ));
        let w = Conv1dWeights::zeros(1, 1, 5, 1);
        assert!(matches!(
            conv1d_forward(&row_input(&[1.0; 4]), &w),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    // Direct-summation oracle: recompute one layer entry-by-entry from the
    // definition, without reusing conv_layer_preact.
    #[test]
    fn random_instance_matches_direct_summation() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);

        for _ in 0..20 {
            let in_ch = rng.random_range(1..3usize);
            let out_ch = rng.random_range(1..4usize);
            let len = rng.random_range(5..16usize);
            let kw = 3;

            let mut layer = ConvLayer::zeros(in_ch, out_ch, kw);
            for kernel in &mut layer.kernels {
                for v in kernel.as_mut_slice() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            for b in &mut layer.bias {
                *b = rng.random_range(-0.5..0.5);
            }
            let input = Matrix::from_fn(in_ch, len, |_, _| rng.random_range(-1.0..1.0));

            let fast = conv_layer_preact(&input, &layer);
            for oc in 0..out_ch {
                for p in 0..len - kw + 1 {
                    let mut acc = layer.bias[oc];
                    for ic in 0..in_ch {
                        for k in 0..kw {
                            acc += layer.kernels[oc].get(ic, k) * input.get(ic, p + k);
                        }
                    }
                    assert!((fast.get(oc, p) - acc).abs() < 1e-12);
                }
            }
        }
    }
}
