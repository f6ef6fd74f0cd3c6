//! Flat INI-style run configuration with per-stage sections.
//!
//! Three sections mirror the workflow stages: `[synth]` for trace
//! generation, `[preprocess]` for windowing and the split, `[train]` for
//! model and optimizer settings. Command-line flags override file values.

use std::fs;
use std::path::Path;

use wattcast::nn::Architecture;
use wattcast::synth::SynthConfig;
use wattcast::train::OptimizerKind;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub lookback: usize,
    pub horizon: usize,
    pub ratios: (f64, f64, f64),
    pub architecture: Architecture,
    pub hidden_size: usize,
    pub conv_channels: usize,
    pub kernel_width: usize,
    pub conv_layers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global L2 gradient clip; 0 disables clipping.
    pub grad_clip: f64,
    pub train_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            lookback: 300,
            horizon: 90,
            ratios: (0.7, 0.15, 0.15),
            architecture: Architecture::FcLstm,
            hidden_size: 64,
            conv_channels: 32,
            kernel_width: 5,
            conv_layers: 2,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            max_epochs: 100,
            patience: 10,
            grad_clip: 5.0,
            train_seed: 42,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        let mut adam = match config.optimizer {
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => (beta1, beta2, epsilon),
            OptimizerKind::Sgd => (0.9, 0.999, 1e-8),
        };
        let mut optimizer_tag = String::from("adam");

        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line
                .strip_prefix('[')
                .and_then(|rest| rest.strip_suffix(']'))
            {
                section = name.trim().to_string();
                if !matches!(section.as_str(), "synth" | "preprocess" | "train") {
                    return Err(CliError::config(format!(
                        "line {line_no}: unknown section `[{section}]`"
                    )));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            if section.is_empty() {
                return Err(CliError::config(format!(
                    "line {line_no}: key `{key}` appears before any section"
                )));
            }
            config.apply(&section, key, value, &mut optimizer_tag, &mut adam)?;
        }

        config.optimizer = match optimizer_tag.as_str() {
            "adam" => OptimizerKind::Adam {
                beta1: adam.0,
                beta2: adam.1,
                epsilon: adam.2,
            },
            "sgd" => OptimizerKind::Sgd,
            other => {
                return Err(CliError::config(format!(
                    "key `optimizer`: unknown value `{other}`"
                )))
            }
        };
        Ok(config)
    }

    fn apply(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
        optimizer_tag: &mut String,
        adam: &mut (f64, f64, f64),
    ) -> Result<(), CliError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| CliError::config(format!("key `{key}`: cannot parse value `{value}`")))
        }

        match (section, key) {
            ("synth", "duration_s") => self.synth.duration_s = parse(key, value)?,
            ("synth", "seed") => self.synth.seed = parse(key, value)?,
            ("synth", "base_load_w") => self.synth.base_load_w = parse(key, value)?,
            ("synth", "job_rate_per_hour") => self.synth.job_rate_per_hour = parse(key, value)?,
            ("synth", "job_power_min_w") => self.synth.job_power_w.0 = parse(key, value)?,
            ("synth", "job_power_max_w") => self.synth.job_power_w.1 = parse(key, value)?,
            ("synth", "job_duration_min_s") => self.synth.job_duration_s.0 = parse(key, value)?,
            ("synth", "job_duration_max_s") => self.synth.job_duration_s.1 = parse(key, value)?,
            ("synth", "iter_period_min_s") => self.synth.iter_period_s.0 = parse(key, value)?,
            ("synth", "iter_period_max_s") => self.synth.iter_period_s.1 = parse(key, value)?,
            ("synth", "iter_amplitude_frac") => self.synth.iter_amplitude_frac = parse(key, value)?,
            ("synth", "noise_std_w") => self.synth.noise_std_w = parse(key, value)?,
            ("synth", "spike_prob") => self.synth.spike_prob = parse(key, value)?,
            ("synth", "spike_min_w") => self.synth.spike_magnitude_w.0 = parse(key, value)?,
            ("synth", "spike_max_w") => self.synth.spike_magnitude_w.1 = parse(key, value)?,
            ("synth", "peak_cap_w") => self.synth.peak_cap_w = parse(key, value)?,
            ("preprocess", "lookback") => self.lookback = parse(key, value)?,
            ("preprocess", "horizon") => self.horizon = parse(key, value)?,
            ("preprocess", "train_ratio") => self.ratios.0 = parse(key, value)?,
            ("preprocess", "val_ratio") => self.ratios.1 = parse(key, value)?,
            ("preprocess", "test_ratio") => self.ratios.2 = parse(key, value)?,
            ("train", "architecture") => {
                self.architecture = value
                    .parse()
                    .map_err(|e| CliError::config(format!("key `architecture`: {e}")))?
            }
            ("train", "hidden_size") => self.hidden_size = parse(key, value)?,
            ("train", "conv_channels") => self.conv_channels = parse(key, value)?,
            ("train", "kernel_width") => self.kernel_width = parse(key, value)?,
            ("train", "conv_layers") => self.conv_layers = parse(key, value)?,
            ("train", "batch_size") => self.batch_size = parse(key, value)?,
            ("train", "learning_rate") => self.learning_rate = parse(key, value)?,
            ("train", "optimizer") => *optimizer_tag = value.to_string(),
            ("train", "beta1") => adam.0 = parse(key, value)?,
            ("train", "beta2") => adam.1 = parse(key, value)?,
            ("train", "epsilon") => adam.2 = parse(key, value)?,
            ("train", "max_epochs") => self.max_epochs = parse(key, value)?,
            ("train", "patience") => self.patience = parse(key, value)?,
            ("train", "grad_clip") => self.grad_clip = parse(key, value)?,
            ("train", "seed") => self.train_seed = parse(key, value)?,
            (_, key) => {
                return Err(CliError::config(format!(
                    "unknown key `{key}` in section `[{section}]`"
                )))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let config = RunConfig::default();
        assert_eq!(config.lookback, 300);
        assert_eq!(config.horizon, 90);
        assert_eq!(config.ratios, (0.7, 0.15, 0.15));
    }

    #[test]
    fn parses_sections_and_overrides_defaults() {
        let text = "# run settings\n[preprocess]\nlookback = 120\nhorizon = 30\n\n[train]\narchitecture = GRU\nseed = 7\n[synth]\nduration_s = 500\n";
        let config = RunConfig::parse(text).unwrap();
        assert_eq!(config.lookback, 120);
        assert_eq!(config.horizon, 30);
        assert_eq!(config.architecture, Architecture::Gru);
        assert_eq!(config.train_seed, 7);
        assert_eq!(config.synth.duration_s, 500);
    }

    #[test]
    fn rejects_unknown_keys_by_name() {
        let err = RunConfig::parse("[train]\nlearning = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning"), "{err}");

        let err = RunConfig::parse("[synth]\nduration_s = soon\n").unwrap_err();
        assert!(err.to_string().contains("duration_s"), "{err}");
    }

    #[test]
    fn rejects_sectionless_keys_and_bad_sections() {
        assert!(RunConfig::parse("lookback = 10\n").is_err());
        assert!(RunConfig::parse("[models]\nx = 1\n").is_err());
    }

    #[test]
    fn optimizer_tag_selects_kind() {
        let config = RunConfig::parse("[train]\noptimizer = sgd\n").unwrap();
        assert_eq!(config.optimizer, OptimizerKind::Sgd);
        let config = RunConfig::parse("[train]\nbeta1 = 0.8\n").unwrap();
        assert!(matches!(config.optimizer, OptimizerKind::Adam { beta1, .. } if beta1 == 0.8));
    }
}
