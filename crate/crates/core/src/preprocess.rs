//! Normalization, sliding windows, and the chronological split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::TimeSeries;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cannot fit a scaler on an empty series")]
    EmptySeries,
    #[error("degenerate scaler: series is constant at {0}")]
    DegenerateScaler(f64),
    #[error("scaler requires max > min, got min {min}, max {max}")]
    InvalidScaler { min: f64, max: f64 },
    #[error("lookback and horizon must both be at least 1")]
    BadWindowShape,
    #[error("series has {len} samples but lookback {lookback} + horizon {horizon} are required")]
    InsufficientData {
        len: usize,
        lookback: usize,
        horizon: usize,
    },
    #[error("split ratios must be positive and sum to 1, got ({0}, {1}, {2})")]
    BadRatios(f64, f64, f64),
    #[error("split leaves an empty partition (train {train}, val {val}, test {test})")]
    EmptyPartition {
        train: usize,
        val: usize,
        test: usize,
    },
    #[error("dataset has not been split")]
    NotSplit,
}

/// Min-max bounds fitted on training data; maps `[min, max]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    min: f64,
    max: f64,
}

impl ScalerParams {
    pub fn new(min: f64, max: f64) -> Result<Self, PreprocessError> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(PreprocessError::InvalidScaler { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Watts to normalized units. Inputs outside `[min, max]` map outside
    /// `[0, 1]` rather than clipping.
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    /// Normalized units back to watts.
    pub fn denormalize(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }

    pub(crate) fn fit_slice(values: &[f64]) -> Result<Self, PreprocessError> {
        if values.is_empty() {
            return Err(PreprocessError::EmptySeries);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Err(PreprocessError::DegenerateScaler(min));
        }
        Ok(Self { min, max })
    }
}

/// Fits min-max bounds over the whole series.
pub fn fit_minmax(ts: &TimeSeries) -> Result<ScalerParams, PreprocessError> {
    ScalerParams::fit_slice(ts.values())
}

/// Maps every sample through the scaler into normalized units.
pub fn transform(ts: &TimeSeries, scaler: &ScalerParams) -> TimeSeries {
    ts.map_values(|x| scaler.normalize(x))
}

/// Maps normalized samples back to watts.
pub fn inverse_transform(ts: &TimeSeries, scaler: &ScalerParams) -> TimeSeries {
    ts.map_values(|y| scaler.denormalize(y))
}

/// One training example: `lookback` history samples followed immediately by
/// `horizon` target samples, both in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    history: Vec<f64>,
    target: Vec<f64>,
    origin_index: usize,
}

impl Window {
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Index of the first history sample in the source series.
    pub fn origin_index(&self) -> usize {
        self.origin_index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Stride-1 sliding windows over a series, with optional chronological
/// split bounds `(train_end, val_end)` in window indices.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    windows: Vec<Window>,
    lookback: usize,
    horizon: usize,
    start_time: f64,
    step: f64,
    split: Option<(usize, usize)>,
}

impl WindowedDataset {
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Start time of the source series this dataset was cut from.
    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Sample period of the source series.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn split_bounds(&self) -> Option<(usize, usize)> {
        self.split
    }

    /// Windows belonging to one partition. Errors until
    /// [`split_chronological`] has assigned bounds.
    pub fn slice(&self, split: Split) -> Result<&[Window], PreprocessError> {
        let (train_end, val_end) = self.split.ok_or(PreprocessError::NotSplit)?;
        Ok(match split {
            Split::Train => &self.windows[..train_end],
            Split::Val => &self.windows[train_end..val_end],
            Split::Test => &self.windows[val_end..],
        })
    }

    /// Timestamp in the source series of the last target sample of `window`.
    pub fn final_target_time(&self, window: &Window) -> f64 {
        let idx = window.origin_index() + self.lookback + self.horizon - 1;
        self.start_time + idx as f64 * self.step
    }
}

/// Cuts every stride-1 (history, target) window out of a normalized series.
///
/// A series of `N` samples yields `N - lookback - horizon + 1` windows;
/// window `k` takes samples `[k, k + lookback)` as history and
/// `[k + lookback, k + lookback + horizon)` as target.
pub fn make_windows(
    ts: &TimeSeries,
    lookback: usize,
    horizon: usize,
) -> Result<WindowedDataset, PreprocessError> {
    if lookback == 0 || horizon == 0 {
        return Err(PreprocessError::BadWindowShape);
    }
    let len = ts.len();
    if len < lookback + horizon {
        return Err(PreprocessError::InsufficientData {
            len,
            lookback,
            horizon,
        });
    }

    let values = ts.values();
    let count = len - lookback - horizon + 1;
    let windows = (0..count)
        .map(|k| Window {
            history: values[k..k + lookback].to_vec(),
            target: values[k + lookback..k + lookback + horizon].to_vec(),
            origin_index: k,
        })
        .collect();

    Ok(WindowedDataset {
        windows,
        lookback,
        horizon,
        start_time: ts.start_time(),
        step: ts.step(),
        split: None,
    })
}

/// Assigns chronological split bounds by window origin: train takes the
/// first `floor(r_train * count)` windows, validation up to
/// `floor((r_train + r_val) * count)`, test the remainder. No shuffling;
/// test is strictly the latest data.
pub fn split_chronological(
    ds: WindowedDataset,
    ratios: (f64, f64, f64),
) -> Result<WindowedDataset, PreprocessError> {
    let (r_train, r_val, r_test) = ratios;
    let positive = r_train > 0.0 && r_val > 0.0 && r_test > 0.0;
    if !positive || (r_train + r_val + r_test - 1.0).abs() > 1e-9 {
        return Err(PreprocessError::BadRatios(r_train, r_val, r_test));
    }

    let count = ds.windows.len();
    let train_end = (r_train * count as f64).floor() as usize;
    let val_end = ((r_train + r_val) * count as f64).floor() as usize;
    let (train, val, test) = (train_end, val_end - train_end, count - val_end);
    if train == 0 || val == 0 || test == 0 {
        return Err(PreprocessError::EmptyPartition { train, val, test });
    }

    Ok(WindowedDataset {
        split: Some((train_end, val_end)),
        ..ds
    })
}

/// Standard preparation pipeline for training: fit the scaler on the
/// samples reachable from training windows only, normalize the whole
/// series with it, window, and split.
///
/// Returns the split dataset plus the scaler, which must accompany the
/// model to map predictions back to watts.
pub fn prepare_dataset(
    ts: &TimeSeries,
    lookback: usize,
    horizon: usize,
    ratios: (f64, f64, f64),
) -> Result<(WindowedDataset, ScalerParams), PreprocessError> {
    if lookback == 0 || horizon == 0 {
        return Err(PreprocessError::BadWindowShape);
    }
    let len = ts.len();
    if len < lookback + horizon {
        return Err(PreprocessError::InsufficientData {
            len,
            lookback,
            horizon,
        });
    }
    let count = len - lookback - horizon + 1;
    let train_end = (ratios.0 * count as f64).floor() as usize;
    // Last sample index touched by the last training window.
    let train_span = train_end.saturating_sub(1) + lookback + horizon;
    let scaler = ScalerParams::fit_slice(&ts.values()[..train_span.min(len)])?;

    let normalized = transform(ts, &scaler);
    let ds = split_chronological(make_windows(&normalized, lookback, horizon)?, ratios)?;
    Ok((ds, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(0.0, 1.0, values).unwrap()
    }

    #[test]
    fn fit_minmax_finds_extremes() {
        let s = fit_minmax(&series(vec![0.0, 45_000.0])).unwrap();
        assert_eq!((s.min(), s.max()), (0.0, 45_000.0));
        let s = fit_minmax(&series(vec![3.0, 1.0, 2.0])).unwrap();
        assert_eq!((s.min(), s.max()), (1.0, 3.0));
    }

    #[test]
    fn fit_minmax_rejects_constant_series() {
        assert_eq!(
            fit_minmax(&series(vec![5.0, 5.0, 5.0])),
            Err(PreprocessError::DegenerateScaler(5.0))
        );
    }

    #[test]
    fn transform_endpoints_and_midpoint() {
        let s = ScalerParams::new(0.0, 45_000.0).unwrap();
        assert_eq!(s.normalize(0.0), 0.0);
        assert_eq!(s.normalize(45_000.0), 1.0);
        assert_eq!(s.normalize(22_500.0), 0.5);
    }

    #[test]
    fn transform_does_not_clip_out_of_range() {
        let s = ScalerParams::new(10.0, 20.0).unwrap();
        assert!(s.normalize(5.0) < 0.0);
        assert!(s.normalize(25.0) > 1.0);
    }

    #[test]
    fn round_trip_is_identity() {
        let s = ScalerParams::new(100.0, 45_000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(0.0..60_000.0);
            let err = (s.denormalize(s.normalize(x)) - x).abs();
            assert!(err < 1e-12 * (s.max() - s.min()));
        }
    }

    #[test]
    fn window_count_matches_formula() {
        let values: Vec<f64> = (0..390).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 300, 90).unwrap();
        assert_eq!(ds.len(), 1);

        let values: Vec<f64> = (0..391).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 300, 90).unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn make_windows_rejects_short_series() {
        let values: Vec<f64> = (0..389).map(|i| i as f64).collect();
        assert_eq!(
            make_windows(&series(values), 300, 90),
            Err(PreprocessError::InsufficientData {
                len: 389,
                lookback: 300,
                horizon: 90
            })
        );
    }

    #[test]
    fn window_count_formula_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let lookback = rng.random_range(1..40usize);
            let horizon = rng.random_range(1..20usize);
            let n = lookback + horizon + rng.random_range(0..60usize);
            let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let ds = make_windows(&series(values), lookback, horizon).unwrap();
            assert_eq!(ds.len(), n - lookback - horizon + 1);
        }
    }

    #[test]
    fn targets_never_precede_history() {
        let values: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 10, 5).unwrap();
        for w in ds.windows() {
            // Values equal indices here, so ordering is directly visible.
            let max_hist = w.history().last().copied().unwrap();
            let min_target = w.target().first().copied().unwrap();
            assert_eq!(min_target, max_hist + 1.0);
            assert_eq!(w.history().len(), 10);
            assert_eq!(w.target().len(), 5);
        }
    }

    #[test]
    fn split_bounds_match_floor_arithmetic() {
        let values: Vec<f64> = (0..114).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 10, 5).unwrap();
        assert_eq!(ds.len(), 100);
        let ds = split_chronological(ds, (0.7, 0.15, 0.15)).unwrap();
        assert_eq!(ds.split_bounds(), Some((70, 85)));
        assert_eq!(ds.slice(Split::Train).unwrap().len(), 70);
        assert_eq!(ds.slice(Split::Val).unwrap().len(), 15);
        assert_eq!(ds.slice(Split::Test).unwrap().len(), 15);
    }

    #[test]
    fn split_of_twenty_windows() {
        let values: Vec<f64> = (0..34).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 10, 5).unwrap();
        assert_eq!(ds.len(), 20);
        let ds = split_chronological(ds, (0.7, 0.15, 0.15)).unwrap();
        assert_eq!(ds.split_bounds(), Some((14, 17)));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 10, 5).unwrap();
        assert!(matches!(
            split_chronological(ds, (0.5, 0.2, 0.2)),
            Err(PreprocessError::BadRatios(..))
        ));
    }

    #[test]
    fn split_rejects_empty_partition() {
        let values: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 10, 5).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(matches!(
            split_chronological(ds, (0.7, 0.15, 0.15)),
            Err(PreprocessError::EmptyPartition { .. })
        ));
    }

    #[test]
    fn split_boundaries_are_monotone_by_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(60..400usize);
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
            let ds = make_windows(&series(values), 8, 4).unwrap();
            let ds = match split_chronological(ds, (0.7, 0.15, 0.15)) {
                Ok(ds) => ds,
                Err(_) => continue,
            };
            let max_train = ds
                .slice(Split::Train)
                .unwrap()
                .iter()
                .map(Window::origin_index)
                .max();
            let min_val = ds
                .slice(Split::Val)
                .unwrap()
                .iter()
                .map(Window::origin_index)
                .min();
            let min_test = ds
                .slice(Split::Test)
                .unwrap()
                .iter()
                .map(Window::origin_index)
                .min();
            assert!(max_train.unwrap() < min_val.unwrap());
            assert!(min_val.unwrap() < min_test.unwrap());
        }
    }

    #[test]
    fn unsplit_dataset_refuses_slicing() {
        let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let ds = make_windows(&series(values), 10, 5).unwrap();
        assert_eq!(ds.slice(Split::Train), Err(PreprocessError::NotSplit));
    }

    #[test]
    fn prepare_dataset_fits_scaler_on_train_span_only() {
        // Ramp series: the global max sits in the test region, so a
        // train-fitted scaler must keep max below the global max.
        let values: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let (ds, scaler) = prepare_dataset(&series(values), 10, 5, (0.7, 0.15, 0.15)).unwrap();
        assert!(scaler.max() < 199.0);
        assert_eq!(scaler.min(), 0.0);
        // Test-region targets exceed 1.0 in normalized units (no clipping).
        let test = ds.slice(Split::Test).unwrap();
        let last = test.last().unwrap();
        assert!(last.target().iter().copied().fold(f64::MIN, f64::max) > 1.0);
    }
}
