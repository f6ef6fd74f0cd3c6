//! Command implementations shared by the argument parser.

use std::fs;
use std::path::{Path, PathBuf};

use wattcast::eval::{evaluate_model, ResidualSeries};
use wattcast::ingest::{aggregate_total_load, parse_power_log, LOG_HEADER};
use wattcast::nn::{self, HyperParams};
use wattcast::preprocess::{make_windows, prepare_dataset, split_chronological, transform, Split};
use wattcast::series::TimeSeries;
use wattcast::synth::generate;
use wattcast::train::{load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig};

use crate::config::RunConfig;
use crate::CliError;

pub const SERIES_HEADER: &str = "t_seconds,power_watts";

/// Loads a load series from either supported CSV shape: a raw per-GPU
/// power log (aggregated to 1 Hz) or an already-aggregated two-column
/// trace.
pub fn read_series(path: &Path) -> Result<TimeSeries, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read data file {}: {e}", path.display())))?;
    let header = text.lines().next().unwrap_or("").trim_end_matches('\r');

    if header == LOG_HEADER {
        let records = parse_power_log(text.as_bytes()).map_err(CliError::data_from)?;
        return aggregate_total_load(&records, 1.0).map_err(CliError::data_from);
    }
    if header == SERIES_HEADER {
        return parse_series_csv(&text);
    }
    Err(CliError::data(format!(
        "unrecognized data header `{header}`: expected `{LOG_HEADER}` or `{SERIES_HEADER}`"
    )))
}

fn parse_series_csv(text: &str) -> Result<TimeSeries, CliError> {
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate().skip(1) {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| CliError::data(format!("line {line_no}: expected `t,power`")))?;
        let t: f64 = t
            .parse()
            .map_err(|_| CliError::data(format!("line {line_no}: bad timestamp `{t}`")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| CliError::data(format!("line {line_no}: bad power `{v}`")))?;
        timestamps.push(t);
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::data("trace file has no samples".to_string()));
    }
    let start = timestamps[0];
    let step = if timestamps.len() >= 2 {
        timestamps[1] - timestamps[0]
    } else {
        1.0
    };
    if !(step.is_finite() && step > 0.0) {
        return Err(CliError::data(format!(
            "non-increasing timestamps (step {step})"
        )));
    }
    for (k, &t) in timestamps.iter().enumerate() {
        let expected = start + k as f64 * step;
        if (t - expected).abs() > 1e-6 * step.max(1.0) {
            return Err(CliError::data(format!(
                "trace is not uniformly sampled: sample {k} at {t}, expected {expected}"
            )));
        }
    }
    TimeSeries::new(start, step, values).map_err(CliError::data_from)
}

pub fn series_to_csv(ts: &TimeSeries) -> String {
    let mut out = String::from("t_seconds,power_watts\n");
    for (k, v) in ts.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", ts.timestamp(k), v));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_synth(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ts = generate(&config.synth).map_err(CliError::from)?;
    write_file(out, &series_to_csv(&ts))?;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in ts.values() {
        min = min.min(v);
        max = max.max(v);
    }
    println!(
        "wrote {} samples to {} (min {:.1} W, max {:.1} W)",
        ts.len(),
        out.display(),
        min,
        max
    );
    Ok(())
}

fn hyper_from(config: &RunConfig) -> HyperParams {
    HyperParams {
        architecture: config.architecture,
        input_size: 1,
        hidden_size: config.hidden_size,
        conv_channels: config.conv_channels,
        kernel_width: config.kernel_width,
        conv_layers: config.conv_layers,
        lookback: config.lookback,
        horizon: config.horizon,
    }
}

pub fn default_history_path(checkpoint_out: &Path) -> PathBuf {
    let stem = checkpoint_out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    checkpoint_out.with_file_name(format!("{stem}_history.csv"))
}

pub fn cmd_train(
    config: &RunConfig,
    data: &Path,
    checkpoint_out: &Path,
    history_out: Option<&Path>,
) -> Result<(), CliError> {
    let series = read_series(data)?;
    let (dataset, scaler) =
        prepare_dataset(&series, config.lookback, config.horizon, config.ratios)
            .map_err(CliError::from)?;

    let train_config = TrainConfig {
        hyper: hyper_from(config),
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        optimizer: config.optimizer,
        max_epochs: config.max_epochs,
        patience: config.patience,
        grad_clip: if config.grad_clip > 0.0 {
            Some(config.grad_clip)
        } else {
            None
        },
        seed: config.train_seed,
    };
    let (weights, history) = train(&train_config, &dataset).map_err(CliError::from)?;
    save_checkpoint(&weights, &scaler, &train_config, checkpoint_out).map_err(CliError::from)?;

    let history_path = history_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_history_path(checkpoint_out));
    write_file(&history_path, &history.to_csv())?;

    println!(
        "trained {} for {} epochs; best validation loss {:.6e} at epoch {}; checkpoint {}",
        train_config.hyper.architecture,
        history.epochs_run(),
        history.val_loss[history.best_epoch],
        history.best_epoch + 1,
        checkpoint_out.display()
    );
    Ok(())
}

fn load_checkpoint_cli(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(CliError::data_from)
}

pub fn cmd_predict(
    checkpoint_path: &Path,
    data: &Path,
    t_index: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let checkpoint = load_checkpoint_cli(checkpoint_path)?;
    let series = read_series(data)?;
    let lookback = checkpoint.model.hyper.lookback;

    if t_index >= series.len() {
        return Err(CliError::data(format!(
            "t_index {t_index} is beyond the trace (length {})",
            series.len()
        )));
    }
    if t_index + 1 < lookback {
        return Err(CliError::data(format!(
            "need {lookback} history samples ending at t_index {t_index}, trace provides {}",
            t_index + 1
        )));
    }

    let history: Vec<f64> = series.values()[t_index + 1 - lookback..=t_index]
        .iter()
        .map(|&w| checkpoint.scaler.normalize(w))
        .collect();
    let prediction = nn::forward(&history, &checkpoint.model).map_err(CliError::data_from)?;

    // Negative watt forecasts are clamped at the output boundary only.
    let pairs: Vec<(f64, f64)> = prediction
        .iter()
        .enumerate()
        .map(|(j, &y)| {
            let t = series.timestamp(t_index + 1 + j);
            (t, checkpoint.scaler.denormalize(y).max(0.0))
        })
        .collect();

    let mut json = serde_json::to_string_pretty(&pairs)
        .map_err(|e| CliError::data(format!("cannot serialize forecast: {e}")))?;
    json.push('\n');
    match out {
        Some(path) => write_file(path, &json)?,
        None => print!("{json}"),
    }
    Ok(())
}

/// Test-split evaluation shared by `evaluate` and `export-plot`.
fn test_split_trace(
    config: &RunConfig,
    checkpoint: &Checkpoint,
    data: &Path,
) -> Result<(wattcast::eval::MetricsReport, ResidualSeries), CliError> {
    let series = read_series(data)?;
    let hyper = &checkpoint.model.hyper;
    let normalized = transform(&series, &checkpoint.scaler);
    let dataset =
        make_windows(&normalized, hyper.lookback, hyper.horizon).map_err(CliError::from)?;
    let dataset = split_chronological(dataset, config.ratios).map_err(CliError::from)?;
    evaluate_model(&checkpoint.model, &checkpoint.scaler, &dataset, Split::Test)
        .map_err(CliError::from)
}

pub fn cmd_evaluate(
    config: &RunConfig,
    checkpoint_path: &Path,
    data: &Path,
    metrics_out: &Path,
    residuals_out: &Path,
) -> Result<(), CliError> {
    let checkpoint = load_checkpoint_cli(checkpoint_path)?;
    let (report, trace) = test_split_trace(config, &checkpoint, data)?;

    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::data(format!("cannot serialize metrics: {e}")))?;
    json.push('\n');
    write_file(metrics_out, &json)?;
    write_file(residuals_out, &trace.to_csv())?;

    println!(
        "test split n={}: rmse {:.4} W, mae {:.4} W, mbd {:.4} W, smape {:.4}%, r_squared {:.4}",
        report.n, report.rmse, report.mae, report.mbd, report.smape, report.r_squared
    );
    Ok(())
}

pub fn cmd_export_plot(
    config: &RunConfig,
    checkpoint_path: &Path,
    data: &Path,
    out: &Path,
    range_start: Option<f64>,
    range_len: Option<f64>,
) -> Result<(), CliError> {
    let checkpoint = load_checkpoint_cli(checkpoint_path)?;
    let (_, trace) = test_split_trace(config, &checkpoint, data)?;

    let first = *trace.timestamps().first().expect("non-empty test split");
    let last = *trace.timestamps().last().expect("non-empty test split");
    let start = range_start.unwrap_or(first);
    let len = range_len.unwrap_or(last - start + 1.0);
    if len <= 0.0 {
        return Err(CliError::config(format!(
            "--range-len must be positive, got {len}"
        )));
    }
    let end = start + len;
    if start < first || start > last || end > last + 1.0 {
        return Err(CliError::data(format!(
            "requested range [{start}, {end}) is outside the test-split trace [{first}, {}]",
            last
        )));
    }

    let mut out_csv = String::from("t_seconds,actual_w,predicted_w,residual_w\n");
    let mut rows = 0usize;
    for (i, &t) in trace.timestamps().iter().enumerate() {
        if t >= start && t < end {
            let (a, p) = (trace.actual()[i], trace.predicted()[i]);
            out_csv.push_str(&format!("{},{},{},{}\n", t, a, p, p - a));
            rows += 1;
        }
    }
    write_file(out, &out_csv)?;
    println!(
        "wrote {rows} plot rows covering [{start}, {end}) to {}",
        out.display()
    );
    Ok(())
}
