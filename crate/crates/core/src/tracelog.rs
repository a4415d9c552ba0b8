//! Newline-delimited trace logs.
//!
//! One JSON object per round with keys `round, t_send, t_recv, t_empty?,
//! t_issue, t_done` (seconds). A log may end with a single summary record
//! `{"episode": {...}}` carrying episode bounds and facts that per-round
//! records cannot express. Logs from external clients may omit it.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{aggregate_episode, derive_round_metrics, EndReason, EpisodeReport, RoundTrace, TraceError};
use crate::time::Micros;

#[derive(Debug, Error)]
pub enum TraceLogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Ordering { line: usize, source: TraceError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSummary {
    pub start: Micros,
    pub end: Micros,
    #[serde(default)]
    pub end_reason: EndReason,
    #[serde(default)]
    pub mean_duration_error: f64,
    /// Idle time after the last round, waiting for a refresh that never
    /// got applied.
    #[serde(default, skip_serializing_if = "Micros::is_zero")]
    pub trailing_wait: Micros,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryRecord {
    episode: EpisodeSummary,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub rounds: Vec<RoundTrace>,
    pub summary: Option<EpisodeSummary>,
}

impl TraceLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r).expect("round trace serializes"));
            out.push('\n');
        }
        if let Some(summary) = &self.summary {
            let rec = SummaryRecord {
                episode: summary.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("summary serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<TraceLog, TraceLogError> {
        let mut log = TraceLog::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let malformed = |message: String| TraceLogError::Malformed { line, message };
            if log.summary.is_some() {
                return Err(malformed("records after the episode summary".into()));
            }
            let value: serde_json::Value =
                serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
            if value.get("episode").is_some() {
                let rec: SummaryRecord =
                    serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
                log.summary = Some(rec.episode);
                continue;
            }
            let trace: RoundTrace =
                serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
            trace
                .validate()
                .map_err(|source| TraceLogError::Ordering { line, source })?;
            if let Some(prev) = log.rounds.last() {
                if trace.round <= prev.round {
                    return Err(malformed(format!(
                        "round {} does not follow round {}",
                        trace.round, prev.round
                    )));
                }
            }
            log.rounds.push(trace);
        }
        Ok(log)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_jsonl())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<TraceLog, TraceLogError> {
        TraceLog::parse(&fs::read_to_string(path)?)
    }

    /// Recomputes the episode report from the log alone.
    ///
    /// Waiting time is reconstructed as the sum of visible gaps; execution
    /// time is the remainder of the episode span (from the summary if
    /// present, otherwise first round start to last `t_done`).
    pub fn report(&self, pause_threshold: f64) -> EpisodeReport {
        let metrics: Vec<_> = self
            .rounds
            .iter()
            .map(|r| derive_round_metrics(r, pause_threshold).expect("validated at parse"))
            .collect();
        let wait = self
            .rounds
            .iter()
            .filter_map(|r| r.t_empty.map(|e| r.t_issue - e))
            .fold(Micros::ZERO, |a, b| a + b)
            + self.summary.as_ref().map_or(Micros::ZERO, |s| s.trailing_wait);
        let span = match (&self.summary, self.rounds.first(), self.rounds.last()) {
            (Some(s), _, _) => s.end - s.start,
            (None, Some(first), Some(last)) => {
                let start = first.t_empty.unwrap_or(first.t_send).min(first.t_send);
                last.t_done - start
            }
            _ => Micros::ZERO,
        };
        let mut report = aggregate_episode(
            &metrics,
            wait.as_secs_f64(),
            (span - wait).as_secs_f64(),
        );
        if let Some(s) = &self.summary {
            report.end_reason = s.end_reason;
            report.aborted = s.end_reason == EndReason::Aborted;
            report.mean_duration_error = s.mean_duration_error;
        }
        report
    }
}

/// Parses a trace log file and computes its episode report.
pub fn analyze_trace(
    path: impl AsRef<Path>,
    pause_threshold: f64,
) -> Result<EpisodeReport, TraceLogError> {
    Ok(TraceLog::read_from(path)?.report(pause_threshold))
}
