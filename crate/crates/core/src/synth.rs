//! Seeded synthetic GPU power traces.
//!
//! A trace is base load plus rectangular job pulses (Poisson arrivals,
//! uniform power/duration), each modulated by a square-wave iteration
//! pattern, plus Gaussian noise and occasional one-second spikes or dips,
//! clipped to `[0, peak_cap_w]`.
//!
//! All randomness comes from one ChaCha stream in a fixed draw order:
//! first the job process (inter-arrival gap, power, duration, iteration
//! period per job, in arrival order), then per-second noise pairs and
//! spike draws in time order. Identical configs therefore produce
//! identical traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{SeriesError, TimeSeries};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Trace length in seconds (1 Hz samples).
    pub duration_s: u64,
    pub seed: u64,
    /// Idle facility draw in watts.
    pub base_load_w: f64,
    /// Poisson arrival rate of training jobs.
    pub job_rate_per_hour: f64,
    /// Uniform per-job mean power range, watts.
    pub job_power_w: (f64, f64),
    /// Uniform job duration range, seconds.
    pub job_duration_s: (f64, f64),
    /// Uniform training-iteration period range, seconds.
    pub iter_period_s: (f64, f64),
    /// Square-wave modulation depth as a fraction of job power.
    pub iter_amplitude_frac: f64,
    pub noise_std_w: f64,
    /// Per-second probability of an instantaneous spike or dip.
    pub spike_prob: f64,
    /// Uniform spike magnitude range, watts; sign is drawn separately.
    pub spike_magnitude_w: (f64, f64),
    /// Hard ceiling on the trace, watts.
    pub peak_cap_w: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 20_000,
            seed: 42,
            base_load_w: 20_000.0,
            job_rate_per_hour: 0.5,
            job_power_w: (1_500.0, 4_500.0),
            job_duration_s: (20_000.0, 40_000.0),
            iter_period_s: (100.0, 140.0),
            iter_amplitude_frac: 0.35,
            noise_std_w: 50.0,
            spike_prob: 0.002,
            spike_magnitude_w: (400.0, 2_000.0),
            peak_cap_w: 45_000.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::BadConfig(msg));
        if self.duration_s == 0 {
            return bad("duration_s must be at least 1".into());
        }
        if !(self.base_load_w.is_finite() && self.base_load_w >= 0.0) {
            return bad(format!(
                "base_load_w must be non-negative, got {}",
                self.base_load_w
            ));
        }
        if !(self.peak_cap_w.is_finite() && self.peak_cap_w > self.base_load_w) {
            return bad(format!(
                "peak_cap_w ({}) must exceed base_load_w ({})",
                self.peak_cap_w, self.base_load_w
            ));
        }
        if !(self.job_rate_per_hour.is_finite() && self.job_rate_per_hour >= 0.0) {
            return bad(format!(
                "job_rate_per_hour must be non-negative, got {}",
                self.job_rate_per_hour
            ));
        }
        for (name, (lo, hi), nonneg) in [
            ("job_power_w", self.job_power_w, true),
            ("job_duration_s", self.job_duration_s, true),
            ("iter_period_s", self.iter_period_s, true),
            ("spike_magnitude_w", self.spike_magnitude_w, true),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi && (!nonneg || lo >= 0.0)) {
                return bad(format!("{name} range ({lo}, {hi}) must be non-degenerate"));
            }
        }
        if self.iter_period_s.0 <= 0.0 || self.job_duration_s.0 <= 0.0 {
            return bad("job durations and iteration periods must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.iter_amplitude_frac) {
            return bad(format!(
                "iter_amplitude_frac must be in [0, 1], got {}",
                self.iter_amplitude_frac
            ));
        }
        if !(self.noise_std_w.is_finite() && self.noise_std_w >= 0.0) {
            return bad(format!(
                "noise_std_w must be non-negative, got {}",
                self.noise_std_w
            ));
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return bad(format!(
                "spike_prob must be in [0, 1], got {}",
                self.spike_prob
            ));
        }
        Ok(())
    }
}

struct Job {
    start: f64,
    power: f64,
    duration: f64,
    period: f64,
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    range.0 + rng.random::<f64>() * (range.1 - range.0)
}

/// Generates a 1 Hz trace of `duration_s` samples, fully determined by the
/// config (including its seed).
pub fn generate(config: &SynthConfig) -> Result<TimeSeries, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.duration_s as usize;
    let horizon = config.duration_s as f64;

    // Job process first, in arrival order.
    let mut jobs: Vec<Job> = Vec::new();
    if config.job_rate_per_hour > 0.0 {
        let rate_per_s = config.job_rate_per_hour / 3600.0;
        let mut t = 0.0;
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / rate_per_s;
            if t >= horizon {
                break;
            }
            jobs.push(Job {
                start: t,
                power: uniform(&mut rng, config.job_power_w),
                duration: uniform(&mut rng, config.job_duration_s),
                period: uniform(&mut rng, config.iter_period_s),
            });
        }
    }

    // Job pulses with square-wave iteration modulation. A job covers the
    // integer seconds t with start <= t < start + duration.
    let mut values = vec![config.base_load_w; n];
    for job in &jobs {
        let first = job.start.ceil() as usize;
        let last = ((job.start + job.duration).ceil() as usize).min(n);
        for (k, value) in values.iter_mut().enumerate().take(last).skip(first) {
            let phase = ((k as f64 - job.start) % job.period) / job.period;
            let square = if phase < 0.5 { 1.0 } else { -1.0 };
            *value += job.power * (1.0 + config.iter_amplitude_frac * square);
        }
    }

    // Per-second noise and spikes, in time order.
    for value in values.iter_mut() {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let gauss = (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        let mut v = *value + config.noise_std_w * gauss;

        let u_spike: f64 = rng.random();
        if u_spike < config.spike_prob {
            let magnitude = uniform(&mut rng, config.spike_magnitude_w);
            let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            v += sign * magnitude;
        }
        *value = v.clamp(0.0, config.peak_cap_w);
    }

    Ok(TimeSeries::new(0.0, 1.0, values)?)
}
