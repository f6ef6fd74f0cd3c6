//! Raw power-log parsing and facility-level aggregation.
//!
//! Input logs carry one row per (device, instant) power reading at up to
//! 100 ms resolution. Aggregation buckets the time axis, averages each
//! device stream within a bucket, forward-fills devices that skip a bucket,
//! and sums the per-device means into one total-load series.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read};

use thiserror::Error;

use crate::series::{SeriesError, TimeSeries};

pub const LOG_HEADER: &str = "timestamp,node_id,job_id,gpu_index,power_watts";

/// One power reading from a single GPU.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRecord {
    /// Seconds since epoch, with fractional part.
    pub timestamp: f64,
    pub node_id: String,
    /// Absent when the device was not attached to a scheduled job.
    pub job_id: Option<String>,
    pub gpu_index: u32,
    /// Instantaneous draw in watts. Finite and non-negative.
    pub power: f64,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing or invalid header: expected `{LOG_HEADER}`")]
    BadHeader,
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("no records to aggregate")]
    NoRecords,
    #[error("bucket width must be positive, got {0}")]
    BadBucket(f64),
    #[error("new step {new_step} is not a positive integer multiple of the current step {step}")]
    BadResampleStep { step: f64, new_step: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn malformed(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

/// Parses a CSV power log into records, preserving file order.
///
/// The header must match [`LOG_HEADER`] exactly. An empty `job_id` field
/// becomes `None`. Rows with the wrong column count, non-numeric fields,
/// or negative/non-finite power are rejected with their line number.
pub fn parse_power_log<R: Read>(source: R) -> Result<Vec<PowerRecord>, IngestError> {
    let reader = BufReader::new(source);
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(IngestError::BadHeader),
    };
    if header.trim_end_matches('\r') != LOG_HEADER {
        return Err(IngestError::BadHeader);
    }

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        let line_no = idx + 2; // 1-based, counting the header
        if line.is_empty() {
            continue;
        }

        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(malformed(
                line_no,
                format!("expected 5 columns, got {}", fields.len()),
            ));
        }

        let timestamp: f64 = fields[0]
            .parse()
            .map_err(|_| malformed(line_no, format!("non-numeric timestamp `{}`", fields[0])))?;
        if !timestamp.is_finite() {
            return Err(malformed(line_no, "timestamp is not finite"));
        }

        let gpu_index: u32 = fields[3]
            .parse()
            .map_err(|_| malformed(line_no, format!("invalid gpu_index `{}`", fields[3])))?;

        let power: f64 = fields[4]
            .parse()
            .map_err(|_| malformed(line_no, format!("non-numeric power `{}`", fields[4])))?;
        if !power.is_finite() {
            return Err(malformed(line_no, "power is not finite"));
        }
        if power < 0.0 {
            return Err(malformed(line_no, format!("negative power {power}")));
        }

        records.push(PowerRecord {
            timestamp,
            node_id: fields[1].to_string(),
            job_id: if fields[2].is_empty() {
                None
            } else {
                Some(fields[2].to_string())
            },
            gpu_index,
            power,
        });
    }
    Ok(records)
}

/// Aggregates per-device readings into a single total-load series.
///
/// The time axis is bucketed into consecutive intervals of width `bucket`,
/// starting at the floor of the earliest timestamp. Within a bucket each
/// (node, GPU) stream is averaged; the per-device means are then summed
/// over all devices. A device with no reading in a bucket holds its most
/// recent mean (forward fill) and contributes zero before its first
/// appearance. Devices are summed in sorted key order so the result does
/// not depend on input ordering.
pub fn aggregate_total_load(
    records: &[PowerRecord],
    bucket: f64,
) -> Result<TimeSeries, IngestError> {
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    if !(bucket.is_finite() && bucket > 0.0) {
        return Err(IngestError::BadBucket(bucket));
    }

    let t_min = records
        .iter()
        .map(|r| r.timestamp)
        .fold(f64::INFINITY, f64::min);
    let t_max = records
        .iter()
        .map(|r| r.timestamp)
        .fold(f64::NEG_INFINITY, f64::max);
    let start = t_min.floor();
    let n_buckets = ((t_max - start) / bucket).floor() as usize + 1;

    // Per-device (sum, count) accumulators per bucket.
    let mut streams: BTreeMap<(&str, u32), Vec<(f64, u64)>> = BTreeMap::new();
    for record in records {
        let k = (((record.timestamp - start) / bucket).floor() as usize).min(n_buckets - 1);
        let slots = streams
            .entry((record.node_id.as_str(), record.gpu_index))
            .or_insert_with(|| vec![(0.0, 0); n_buckets]);
        slots[k].0 += record.power;
        slots[k].1 += 1;
    }

    let mut totals = vec![0.0; n_buckets];
    for slots in streams.values() {
        let mut last_mean = 0.0; // zero before the device's first reading
        for (k, &(sum, count)) in slots.iter().enumerate() {
            if count > 0 {
                last_mean = sum / count as f64;
            }
            totals[k] += last_mean;
        }
    }

    Ok(TimeSeries::new(start, bucket, totals)?)
}

/// Downsamples to a coarser grid by averaging consecutive groups.
///
/// `new_step` must be a positive integer multiple of the current step; a
/// trailing group with fewer than `new_step / step` samples is dropped.
pub fn resample(ts: &TimeSeries, new_step: f64) -> Result<TimeSeries, IngestError> {
    let step = ts.step();
    let ratio = new_step / step;
    let k = ratio.round();
    if !(new_step.is_finite() && new_step > 0.0) || k < 1.0 || (ratio - k).abs() > 1e-9 * k.max(1.0)
    {
        return Err(IngestError::BadResampleStep { step, new_step });
    }
    let group = k as usize;
    if group == 1 {
        return Ok(ts.clone());
    }

    let values: Vec<f64> = ts
        .values()
        .chunks_exact(group)
        .map(|chunk| chunk.iter().sum::<f64>() / group as f64)
        .collect();
    Ok(TimeSeries::new(ts.start_time(), new_step, values)?)
}
