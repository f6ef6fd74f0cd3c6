//! Uniformly sampled load series.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("start time must be finite, got {0}")]
    BadStart(f64),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
}

/// A contiguous, uniformly sampled load series in watts.
///
/// Sample `k` sits at `start_time + k * step`. Construction validates that
/// every sample is finite and non-negative; normalized views produced by
/// the preprocessing stage bypass only the non-negativity check, since
/// min-max scaling of out-of-range data may legitimately leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    start_time: f64,
    step: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start_time: f64, step: f64, values: Vec<f64>) -> Result<Self, SeriesError> {
        if !start_time.is_finite() {
            return Err(SeriesError::BadStart(start_time));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(SeriesError::BadStep(step));
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(SeriesError::NonFinite { index });
            }
            if value < 0.0 {
                return Err(SeriesError::Negative { index, value });
            }
        }
        Ok(Self {
            start_time,
            step,
            values,
        })
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of sample `index` in seconds.
    pub fn timestamp(&self, index: usize) -> f64 {
        self.start_time + index as f64 * self.step
    }

    /// Applies `f` to every sample, keeping the time axis. Used for scaler
    /// transforms, where outputs may be negative; they must stay finite.
    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        let values: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        debug_assert!(values.iter().all(|v| v.is_finite()));
        TimeSeries {
            start_time: self.start_time,
            step: self.step,
            values,
        }
    }
}
