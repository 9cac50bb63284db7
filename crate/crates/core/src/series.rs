//! Time series of estimators with standard errors, and their CSV form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSummary;
use crate::noise::NoiseChannel;

/// A trajectory dropped under the exclude failure policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub trajectory: u64,
    pub time: f64,
}

/// Provenance of a series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// `"ddtwa"`, `"oracle"` or `"mean_field"`.
    pub engine: String,
    pub master_seed: Option<u64>,
    pub n_trajectories: u64,
    pub successes: u64,
    pub failures: Vec<FailureRecord>,
    pub dt: f64,
    pub t_end: f64,
    pub output_stride: usize,
    pub scheme: Option<String>,
    pub channels: Vec<NoiseChannel>,
    pub model: ModelSummary,
    /// Filled in by callers that hash their configuration.
    pub model_hash: Option<String>,
    pub warnings: Vec<String>,
}

/// One estimator over time. `None` marks an undefined value.
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub mean: Vec<Option<f64>>,
    pub stderr: Vec<Option<f64>>,
}

/// Mean and standard error of a column averaged over a time window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStat {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub columns: Vec<Column>,
    pub metadata: RunMetadata,
}

impl ObservableSeries {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Value of `name` at sample `i`.
    pub fn value(&self, name: &str, i: usize) -> Option<f64> {
        self.column(name).and_then(|c| c.mean[i])
    }

    pub fn stderr(&self, name: &str, i: usize) -> Option<f64> {
        self.column(name).and_then(|c| c.stderr[i])
    }

    /// Index of the sample closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// Average of `name` over samples with `t >= t_from`.
    ///
    /// The standard error is the larger of the mean per-time error and a
    /// blocked error over time (10 blocks), so both trajectory noise and
    /// residual time dependence are covered.
    pub fn window_average(&self, name: &str, t_from: f64) -> Option<WindowStat> {
        let col = self.column(name)?;
        let idx: Vec<usize> = (0..self.times.len()).filter(|&i| self.times[i] >= t_from).collect();
        let vals: Vec<f64> = idx.iter().map(|&i| col.mean[i]).collect::<Option<_>>()?;
        if vals.is_empty() {
            return None;
        }
        let n = vals.len();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let per_time = idx.iter().filter_map(|&i| col.stderr[i]).sum::<f64>() / n as f64;
        let n_blocks = n.min(10);
        let blocked = if n_blocks >= 2 {
            let size = n / n_blocks;
            let means: Vec<f64> =
                (0..n_blocks).map(|b| vals[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
            let m = means.iter().sum::<f64>() / n_blocks as f64;
            let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n_blocks - 1) as f64;
            (var / n_blocks as f64).sqrt()
        } else {
            0.0
        };
        Some(WindowStat { mean, stderr: per_time.max(blocked), samples: n })
    }

    /// `time,<name>_mean,<name>_stderr,...` with `NaN` for undefined
    /// entries. Floats use the shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for c in &self.columns {
            out.push_str(&format!(",{0}_mean,{0}_stderr", c.name));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&fmt_float(*t));
            for c in &self.columns {
                out.push(',');
                out.push_str(&fmt_opt(c.mean[i]));
                out.push(',');
                out.push_str(&fmt_opt(c.stderr[i]));
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NaN".into()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), fmt_float)
}

/// Parses a table written by [`ObservableSeries::to_csv`] into times and
/// columns.
pub fn parse_csv(text: &str) -> Result<(Vec<f64>, Vec<Column>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Format("empty table".into()))?.split(',').collect();
    if header.first() != Some(&"time") || header.len() % 2 == 0 {
        return Err(Error::Format("header must be time followed by mean/stderr pairs".into()));
    }
    let mut columns = Vec::new();
    for pair in header[1..].chunks(2) {
        let name = pair[0]
            .strip_suffix("_mean")
            .filter(|n| pair[1].strip_suffix("_stderr") == Some(*n))
            .ok_or_else(|| Error::Format(format!("unexpected columns {} {}", pair[0], pair[1])))?;
        columns.push(Column { name: name.to_string(), mean: Vec::new(), stderr: Vec::new() });
    }
    let mut times = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Format(format!("row {} has {} fields, expected {}", row + 1, fields.len(), header.len())));
        }
        let parse = |s: &str| -> Result<Option<f64>> {
            let v: f64 = s.trim().parse().map_err(|_| Error::Format(format!("bad number {s:?} in row {}", row + 1)))?;
            Ok(v.is_finite().then_some(v))
        };
        times.push(parse(fields[0])?.ok_or_else(|| Error::Format(format!("undefined time in row {}", row + 1)))?);
        for (k, c) in columns.iter_mut().enumerate() {
            c.mean.push(parse(fields[1 + 2 * k])?);
            c.stderr.push(parse(fields[2 + 2 * k])?);
        }
    }
    Ok((times, columns))
}
