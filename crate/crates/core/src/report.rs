//! Run directories and side-by-side comparison of two runs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EpisodeReport;
use crate::runtime::EpisodeOutcome;

pub const REPORTS_JSONL: &str = "reports.jsonl";
pub const REPORTS_CSV: &str = "reports.csv";
pub const TRACES_DIR: &str = "traces";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("no episode reports in {0}")]
    Empty(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `reports.jsonl`, `reports.csv` and one trace log per episode
/// under `dir`.
pub fn write_run(dir: impl AsRef<Path>, outcomes: &[EpisodeOutcome]) -> Result<(), ReportError> {
    let dir = dir.as_ref();
    let traces = dir.join(TRACES_DIR);
    fs::create_dir_all(&traces).map_err(io_err(&traces))?;
    let mut jsonl = String::new();
    let mut csv = format!("episode,{}\n", EpisodeReport::CSV_HEADER);
    for (i, out) in outcomes.iter().enumerate() {
        jsonl.push_str(&serde_json::to_string(&out.report).expect("reports serialize"));
        jsonl.push('\n');
        let _ = writeln!(csv, "{i},{}", out.report.to_csv_row());
        let path = traces.join(format!("episode_{i:04}.jsonl"));
        out.trace.write_to(&path).map_err(io_err(&path))?;
    }
    let p = dir.join(REPORTS_JSONL);
    fs::write(&p, jsonl).map_err(io_err(&p))?;
    let p = dir.join(REPORTS_CSV);
    fs::write(&p, csv).map_err(io_err(&p))?;
    Ok(())
}

/// Reads episode reports from a run directory or a `reports.jsonl` file.
pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<EpisodeReport>, ReportError> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path = path.join(REPORTS_JSONL);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut reports = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(line).map_err(|source| ReportError::Parse {
            path: path.clone(),
            line: i + 1,
            source,
        })?;
        reports.push(r);
    }
    if reports.is_empty() {
        return Err(ReportError::Empty(path));
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `(b - a) / a`; absent when `a` is zero and `b` is not.
    pub relative_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub episodes_a: usize,
    pub episodes_b: usize,
    pub metrics: Vec<MetricComparison>,
    /// `1 - mean t_wait(b) / mean t_wait(a)`, raw.
    pub waiting_reduction: Option<f64>,
    /// The same as a percentage rounded to one decimal.
    pub waiting_reduction_pct: Option<f64>,
    pub episode_time_reduction: Option<f64>,
    pub episode_time_reduction_pct: Option<f64>,
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn relative_change(a: f64, b: f64) -> Option<f64> {
    if a == b {
        Some(0.0)
    } else if a == 0.0 {
        None
    } else {
        Some((b - a) / a)
    }
}

fn reduction(a: f64, b: f64) -> Option<f64> {
    relative_change(a, b).map(|c| if c == 0.0 { 0.0 } else { -c })
}

type Metric = (&'static str, fn(&EpisodeReport) -> f64);

// columns in the order the text table prints them
const METRICS: [Metric; 10] = [
    ("n_round", |r| r.n_round as f64),
    ("t_execution", |r| r.t_execution),
    ("t_wait", |r| r.t_wait),
    ("t_episode", |r| r.t_episode),
    ("eta_wait", |r| r.eta_wait),
    ("n_pause", |r| r.n_pause as f64),
    ("mean_l_infer", |r| r.mean_l_infer),
    ("mean_l_gap", |r| r.mean_l_gap),
    ("mean_l_execution", |r| r.mean_l_execution),
    ("mean_l_total", |r| r.mean_l_total),
];

fn mean_of(reports: &[EpisodeReport], f: fn(&EpisodeReport) -> f64) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    reports.iter().map(f).sum::<f64>() / reports.len() as f64
}

/// Per-metric means of two runs and the headline reductions of `b` versus `a`.
pub fn compare_runs(a: &[EpisodeReport], b: &[EpisodeReport]) -> Comparison {
    let metrics: Vec<MetricComparison> = METRICS
        .iter()
        .map(|(name, f)| {
            let (mean_a, mean_b) = (mean_of(a, *f), mean_of(b, *f));
            MetricComparison {
                metric: name.to_string(),
                mean_a,
                mean_b,
                relative_change: relative_change(mean_a, mean_b),
            }
        })
        .collect();
    let get = |name: &str| {
        let m = metrics.iter().find(|m| m.metric == name).expect("known metric");
        (m.mean_a, m.mean_b)
    };
    let (wa, wb) = get("t_wait");
    let (ea, eb) = get("t_episode");
    let waiting_reduction = reduction(wa, wb);
    let episode_time_reduction = reduction(ea, eb);
    Comparison {
        episodes_a: a.len(),
        episodes_b: b.len(),
        metrics,
        waiting_reduction,
        waiting_reduction_pct: waiting_reduction.map(|r| round1(r * 100.0)),
        episode_time_reduction,
        episode_time_reduction_pct: episode_time_reduction.map(|r| round1(r * 100.0)),
    }
}

/// Mean of every report metric over one run, one line per metric.
pub fn summary_table(reports: &[EpisodeReport]) -> String {
    let mut out = String::new();
    for (name, f) in METRICS.iter() {
        let m = mean_of(reports, *f);
        let v = if *name == "eta_wait" {
            format!("{:.1}%", m * 100.0)
        } else {
            format!("{m:.2}")
        };
        let _ = writeln!(out, "{name:<18} {v:>12}");
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean_a,mean_b,relative_change\n");
        for m in &self.metrics {
            let _ = writeln!(out, "{},{},{},{}", m.metric, m.mean_a, m.mean_b, opt(m.relative_change));
        }
        let _ = writeln!(out, "waiting_reduction_pct,,,{}", opt(self.waiting_reduction_pct));
        let _ = writeln!(
            out,
            "episode_time_reduction_pct,,,{}",
            opt(self.episode_time_reduction_pct)
        );
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18} {:>12} {:>12} {:>10}", "metric", "a", "b", "change");
        for m in &self.metrics {
            let change = m
                .relative_change
                .map_or_else(|| "n/a".to_string(), |c| format!("{:+.1}%", c * 100.0));
            let (a, b) = if m.metric == "eta_wait" {
                (format!("{:.1}%", m.mean_a * 100.0), format!("{:.1}%", m.mean_b * 100.0))
            } else {
                (format!("{:.2}", m.mean_a), format!("{:.2}", m.mean_b))
            };
            let _ = writeln!(out, "{:<18} {:>12} {:>12} {:>10}", m.metric, a, b, change);
        }
        let pct = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}%"));
        let _ = writeln!(out, "waiting-time reduction: {}", pct(self.waiting_reduction_pct));
        let _ = writeln!(out, "episode-time reduction: {}", pct(self.episode_time_reduction_pct));
        out
    }
}
