//! Forecast accuracy metrics and residual traces, in watt units.
//!
//! Scoring is horizon-pooled: every (window, horizon-step) pair contributes
//! one (actual, predicted) sample. The residual trace reports the
//! final-horizon-step prediction per window, aligned to source timestamps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, ModelWeights, NnError};
use crate::preprocess::{PreprocessError, ScalerParams, Split, WindowedDataset};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("actual and predicted lengths differ: {actual} vs {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("metrics of empty vectors are undefined")]
    Empty,
    #[error("R² is undefined: actual values have zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<(), EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (p - a) * (p - a))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (p - a).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Mean bias deviation: mean of (predicted − actual). Positive values mean
/// systematic overestimation.
pub fn mbd(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| p - a).sum();
    Ok(sum / actual.len() as f64)
}

/// Symmetric mean absolute percentage error, half-sum denominator:
/// `(100/n) Σ |p − a| / ((|a| + |p|) / 2)`, with 0/0 terms contributing 0.
pub fn smape(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| {
            let denom = (a.abs() + p.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                (p - a).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * sum / actual.len() as f64)
}

/// Coefficient of determination, `1 − SS_res / SS_tot`, with the total sum
/// of squares taken about the mean of `actual`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// The five headline metrics over one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Watts.
    pub rmse: f64,
    /// Watts.
    pub mae: f64,
    /// Watts; positive = overestimation.
    pub mbd: f64,
    /// Percent.
    pub smape: f64,
    pub r_squared: f64,
    /// Number of pooled (window, horizon-step) samples.
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(actual: &[f64], predicted: &[f64]) -> Result<Self, EvalError> {
        Ok(Self {
            rmse: rmse(actual, predicted)?,
            mae: mae(actual, predicted)?,
            mbd: mbd(actual, predicted)?,
            smape: smape(actual, predicted)?,
            r_squared: r_squared(actual, predicted)?,
            n: actual.len(),
        })
    }
}

/// Final-horizon-step trace: one (actual, predicted) pair per window,
/// aligned to the source series timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    timestamps: Vec<f64>,
    actual: Vec<f64>,
    predicted: Vec<f64>,
}

impl ResidualSeries {
    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Residual = predicted − actual, per timestep.
    pub fn residuals(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.actual)
            .map(|(p, a)| p - a)
            .collect()
    }

    /// `t_seconds,actual_w,predicted_w,residual_w` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_seconds,actual_w,predicted_w,residual_w\n");
        for i in 0..self.len() {
            let (a, p) = (self.actual[i], self.predicted[i]);
            out.push_str(&format!("{},{},{},{}\n", self.timestamps[i], a, p, p - a));
        }
        out
    }
}

/// Runs the model over every window of one split, converts predictions and
/// targets back to watts, and scores the pooled pairs.
pub fn evaluate_model(
    model: &ModelWeights,
    scaler: &ScalerParams,
    data: &WindowedDataset,
    split: Split,
) -> Result<(MetricsReport, ResidualSeries), EvalError> {
    let windows = data.slice(split)?;
    if windows.is_empty() {
        return Err(EvalError::Empty);
    }

    let horizon = data.horizon();
    let predictions: Vec<Result<Vec<f64>, NnError>> = windows
        .par_iter()
        .map(|w| nn::forward(w.history(), model))
        .collect();

    let mut actual = Vec::with_capacity(windows.len() * horizon);
    let mut predicted = Vec::with_capacity(windows.len() * horizon);
    let mut trace = ResidualSeries {
        timestamps: Vec::with_capacity(windows.len()),
        actual: Vec::with_capacity(windows.len()),
        predicted: Vec::with_capacity(windows.len()),
    };

    for (window, prediction) in windows.iter().zip(predictions) {
        let prediction = prediction?;
        for (target_norm, pred_norm) in window.target().iter().zip(&prediction) {
            actual.push(scaler.denormalize(*target_norm));
            predicted.push(scaler.denormalize(*pred_norm));
        }
        trace.timestamps.push(data.final_target_time(window));
        trace
            .actual
            .push(scaler.denormalize(window.target()[horizon - 1]));
        trace
            .predicted
            .push(scaler.denormalize(prediction[horizon - 1]));
    }

    Ok((MetricsReport::compute(&actual, &predicted)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_weights, Architecture, HyperParams};
    use crate::preprocess::{make_windows, split_chronological, transform};
    use crate::series::TimeSeries;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rmse_hand_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let v = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((v - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -3.0]).unwrap(), 2.0);
    }

    #[test]
    fn mbd_sign_convention() {
        assert_eq!(mbd(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mbd(&[1.0, 2.0], &[2.0, 3.0]).unwrap(), 1.0);
        // Shifting predictions by +c shifts the bias by exactly c.
        let actual = [10.0, 20.0, 30.0];
        let predicted = [11.0, 19.0, 33.0];
        let shifted: Vec<f64> = predicted.iter().map(|p| p + 2.5).collect();
        let base = mbd(&actual, &predicted).unwrap();
        let after = mbd(&actual, &shifted).unwrap();
        assert!((after - (base + 2.5)).abs() < 1e-12);
    }

    #[test]
    fn smape_hand_values_and_symmetry() {
        assert_eq!(smape(&[100.0, 50.0], &[100.0, 50.0]).unwrap(), 0.0);
        let v = smape(&[100.0], &[110.0]).unwrap();
        assert!((v - 100.0 * 10.0 / 105.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(1..30usize);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let ab = smape(&a, &p).unwrap();
            let ba = smape(&p, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn smape_zero_pairs_contribute_zero() {
        let v = smape(&[0.0, 100.0], &[0.0, 100.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn r_squared_definition_cases() {
        let actual = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(r_squared(&actual, &actual).unwrap(), 1.0);
        let mean = [2.5; 4];
        assert_eq!(r_squared(&actual, &mean).unwrap(), 0.0);
        assert!(matches!(
            r_squared(&[5.0, 5.0], &[1.0, 2.0]),
            Err(EvalError::ZeroVariance)
        ));
    }

    #[test]
    fn rmse_dominates_mae() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let n = rng.random_range(1..100usize);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            assert!(rmse(&a, &p).unwrap() >= mae(&a, &p).unwrap() - 1e-12);
        }
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 200;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();

        // Deterministic permutation: reverse.
        let ar: Vec<f64> = a.iter().rev().copied().collect();
        let pr: Vec<f64> = p.iter().rev().copied().collect();

        let tol = 1e-12;
        assert!((rmse(&a, &p).unwrap() - rmse(&ar, &pr).unwrap()).abs() < tol);
        assert!((mae(&a, &p).unwrap() - mae(&ar, &pr).unwrap()).abs() < tol);
        assert!((mbd(&a, &p).unwrap() - mbd(&ar, &pr).unwrap()).abs() < tol);
        assert!((smape(&a, &p).unwrap() - smape(&ar, &pr).unwrap()).abs() < tol);
        assert!((r_squared(&a, &p).unwrap() - r_squared(&ar, &pr).unwrap()).abs() < tol);
    }

    fn normalized_dataset() -> (WindowedDataset, ScalerParams) {
        let values: Vec<f64> = (0..80)
            .map(|i| 1000.0 + 500.0 * (i as f64 / 5.0).sin().abs())
            .collect();
        let ts = TimeSeries::new(100.0, 1.0, values).unwrap();
        let scaler = ScalerParams::new(1000.0, 1500.0).unwrap();
        let normalized = transform(&ts, &scaler);
        let ds = split_chronological(make_windows(&normalized, 10, 3).unwrap(), (0.7, 0.15, 0.15))
            .unwrap();
        (ds, scaler)
    }

    #[test]
    fn perfect_model_scores_perfectly() {
        // On a linear ramp, a CNN with a delta kernel on the last history
        // sample plus per-step bias increments reproduces every target
        // exactly, so all residuals vanish and R² is 1.
        let slope = 0.01;
        let values: Vec<f64> = (0..40).map(|i| 0.1 + slope * i as f64).collect();
        let ts = TimeSeries::new(0.0, 1.0, values).unwrap();
        let ds = split_chronological(make_windows(&ts, 6, 2).unwrap(), (0.4, 0.3, 0.3)).unwrap();
        let scaler = ScalerParams::new(0.0, 1.0).unwrap(); // identity mapping

        let hyper = HyperParams {
            architecture: Architecture::Cnn1d,
            input_size: 1,
            hidden_size: 1,
            conv_channels: 1,
            kernel_width: 3,
            conv_layers: 1,
            lookback: 6,
            horizon: 2,
        };
        let mut model = crate::nn::ModelWeights::zeros(&hyper).unwrap();
        if let crate::nn::ArchWeights::Conv(w) = &mut model.arch {
            w.layers[0].kernels[0].set(0, 2, 1.0); // feature_p = history[p + 2]
        }
        // Last feature (index 3) is the final history sample; each horizon
        // step adds one slope increment on top of it.
        let feature_count = hyper.feature_size();
        model.head.weights.set(0, feature_count - 1, 1.0);
        model.head.weights.set(1, feature_count - 1, 1.0);
        model.head.bias = vec![slope, 2.0 * slope];

        let (report, trace) = evaluate_model(&model, &scaler, &ds, Split::Test).unwrap();
        assert!(report.rmse < 1e-12);
        assert!(report.mae < 1e-12);
        assert!((report.r_squared - 1.0).abs() < 1e-9);
        assert!(trace.residuals().iter().all(|&r| r.abs() < 1e-12));
    }

    #[test]
    fn constant_mean_predictor_scores_zero_r_squared() {
        let (ds, scaler) = normalized_dataset();
        let windows = ds.slice(Split::Test).unwrap();
        let pooled: Vec<f64> = windows
            .iter()
            .flat_map(|w| w.target().iter().map(|t| scaler.denormalize(*t)))
            .collect();
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let predicted = vec![mean; pooled.len()];
        assert!(r_squared(&pooled, &predicted).unwrap().abs() < 1e-12);
        assert_eq!(r_squared(&pooled, &pooled).unwrap(), 1.0);
    }

    #[test]
    fn pooled_metrics_match_bruteforce_recomputation() {
        let (ds, scaler) = normalized_dataset();
        let hyper = HyperParams {
            architecture: Architecture::FcLstm,
            input_size: 1,
            hidden_size: 3,
            conv_channels: 1,
            kernel_width: 3,
            conv_layers: 1,
            lookback: 10,
            horizon: 3,
        };
        let model = init_weights(&hyper, 21).unwrap();
        let (report, trace) = evaluate_model(&model, &scaler, &ds, Split::Test).unwrap();

        // Brute force: loop over windows, predict, denormalize, pool.
        let windows = ds.slice(Split::Test).unwrap();
        let mut actual = Vec::new();
        let mut predicted = Vec::new();
        for w in windows {
            let pred = crate::nn::forward(w.history(), &model).unwrap();
            for (t, p) in w.target().iter().zip(&pred) {
                actual.push(scaler.denormalize(*t));
                predicted.push(scaler.denormalize(*p));
            }
        }
        assert_eq!(report.n, actual.len());
        let tol = 1e-12;
        assert!(
            (report.rmse - rmse(&actual, &predicted).unwrap()).abs() < tol * report.rmse.max(1.0)
        );
        assert!((report.mae - mae(&actual, &predicted).unwrap()).abs() < tol * report.mae.max(1.0));
        assert!((report.mbd - mbd(&actual, &predicted).unwrap()).abs() < tol);
        assert!(
            (report.smape - smape(&actual, &predicted).unwrap()).abs()
                < tol * report.smape.max(1.0)
        );
        assert!((report.r_squared - r_squared(&actual, &predicted).unwrap()).abs() < tol);

        // Residual trace aligns to the final horizon step of each window.
        assert_eq!(trace.len(), windows.len());
        let first = &windows[0];
        let expected_t = 100.0 + (first.origin_index() + 10 + 3 - 1) as f64;
        assert_eq!(trace.timestamps()[0], expected_t);
    }

    #[test]
    fn metrics_report_serializes_expected_keys() {
        let report = MetricsReport {
            rmse: 1.0,
            mae: 0.5,
            mbd: 0.1,
            smape: 2.0,
            r_squared: 0.99,
            n: 42,
        };
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(
            json,
            r#"{"rmse":1.0,"mae":0.5,"mbd":0.1,"smape":2.0,"r_squared":0.99,"n":42}"#
        );
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
