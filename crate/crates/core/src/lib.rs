//! Short-term forecasting of aggregate GPU power draw in AI data centers.
//!
//! The crate covers the whole batch workflow:
//!
//! 1. [`ingest`] — parse per-GPU power logs, aggregate them into one
//!    facility-level load series, and resample it to a uniform 1 Hz grid.
//! 2. [`preprocess`] — min-max normalization, sliding (history, horizon)
//!    windows, and a chronological train/validation/test split.
//! 3. [`nn`] — LSTM, GRU, and 1D-CNN forecasters with hand-written
//!    reverse-mode gradients through time, in double precision.
//! 4. [`train`] — mini-batch Adam/SGD training with early stopping and
//!    JSON checkpoints.
//! 5. [`eval`] — RMSE / MAE / MBD / sMAPE / R² and residual traces in
//!    original watt units.
//! 6. [`synth`] — a seeded synthetic workload-trace generator so the
//!    pipeline can be exercised end to end without production data.
//!
//! Everything is deterministic given a seed: weight initialization, batch
//! shuffling, trace generation, and gradient reduction all use fixed,
//! documented orders.

pub mod eval;
pub mod ingest;
pub mod nn;
pub mod preprocess;
pub mod series;
pub mod synth;
pub mod train;

pub use series::TimeSeries;
