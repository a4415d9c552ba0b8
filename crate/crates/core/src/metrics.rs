//! Five-event round timing and episode-level continuity metrics.
//!
//! Each inference round is stamped on the client at five instants:
//! observation sent, response received, execution queue exhausted (absent
//! when the queue never ran dry), first refreshed action issued, and that
//! action finished. Everything else is derived from these.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Micros;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("round {round}: {first} must not be later than {second}")]
    Ordering {
        round: u64,
        first: &'static str,
        second: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundTrace {
    pub round: u64,
    pub t_send: Micros,
    pub t_recv: Micros,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_empty: Option<Micros>,
    pub t_issue: Micros,
    pub t_done: Micros,
}

impl RoundTrace {
    pub fn validate(&self) -> Result<(), TraceError> {
        let check = |a: Micros, b: Micros, first, second| {
            if a <= b {
                Ok(())
            } else {
                Err(TraceError::Ordering {
                    round: self.round,
                    first,
                    second,
                })
            }
        };
        check(self.t_send, self.t_recv, "t_send", "t_recv")?;
        check(self.t_recv, self.t_issue, "t_recv", "t_issue")?;
        if let Some(empty) = self.t_empty {
            check(empty, self.t_issue, "t_empty", "t_issue")?;
        }
        check(self.t_issue, self.t_done, "t_issue", "t_done")
    }

    pub fn is_interrupted(&self) -> bool {
        self.t_empty.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub l_infer: f64,
    pub l_gap: f64,
    pub l_execution: f64,
    pub l_total: f64,
    pub interrupted: bool,
    pub is_pause: bool,
}

pub fn derive_round_metrics(
    trace: &RoundTrace,
    pause_threshold: f64,
) -> Result<RoundMetrics, TraceError> {
    trace.validate()?;
    let l_infer = (trace.t_recv - trace.t_send).as_secs_f64();
    let l_gap = trace
        .t_empty
        .map_or(0.0, |empty| (trace.t_issue - empty).as_secs_f64());
    let l_execution = (trace.t_done - trace.t_issue).as_secs_f64();
    Ok(RoundMetrics {
        round: trace.round,
        l_infer,
        l_gap,
        l_execution,
        l_total: l_gap + l_execution,
        interrupted: trace.is_interrupted(),
        is_pause: l_gap > pause_threshold,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndReason {
    #[default]
    Completed,
    Stopped,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub n_round: u64,
    pub t_execution: f64,
    pub t_wait: f64,
    pub t_episode: f64,
    pub eta_wait: f64,
    pub n_pause: u64,
    pub mean_l_infer: f64,
    pub mean_l_gap: f64,
    pub mean_l_execution: f64,
    pub mean_l_total: f64,
    /// Idle time before the first action of the episode; already included
    /// in `t_wait`.
    pub t_wait_first_round: f64,
    /// Mean |actual - predicted| duration over executed actions.
    pub mean_duration_error: f64,
    pub end_reason: EndReason,
    pub aborted: bool,
}

impl EpisodeReport {
    pub const CSV_HEADER: &'static str = "n_round,t_execution,t_wait,t_episode,eta_wait,n_pause,mean_l_infer,mean_l_gap,mean_l_execution,mean_l_total";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n_round,
            self.t_execution,
            self.t_wait,
            self.t_episode,
            self.eta_wait,
            self.n_pause,
            self.mean_l_infer,
            self.mean_l_gap,
            self.mean_l_execution,
            self.mean_l_total
        )
    }

    pub fn empty() -> Self {
        aggregate_episode(&[], 0.0, 0.0)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0u64), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Aggregates per-round metrics with the episode's measured idle and busy time.
///
/// `mean_l_infer` and `mean_l_gap` average over all rounds (seamless rounds
/// contribute a zero gap); `mean_l_execution` and `mean_l_total` average over
/// interrupted rounds only.
pub fn aggregate_episode(rounds: &[RoundMetrics], t_wait: f64, t_execution: f64) -> EpisodeReport {
    let t_episode = t_wait + t_execution;
    let eta_wait = if t_episode > 0.0 {
        t_wait / t_episode
    } else {
        0.0
    };
    let interrupted = || rounds.iter().filter(|r| r.interrupted);
    EpisodeReport {
        n_round: rounds.len() as u64,
        t_execution,
        t_wait,
        t_episode,
        eta_wait,
        n_pause: rounds.iter().filter(|r| r.is_pause).count() as u64,
        mean_l_infer: mean(rounds.iter().map(|r| r.l_infer)),
        mean_l_gap: mean(rounds.iter().map(|r| r.l_gap)),
        mean_l_execution: mean(interrupted().map(|r| r.l_execution)),
        mean_l_total: mean(interrupted().map(|r| r.l_total)),
        t_wait_first_round: rounds
            .first()
            .filter(|r| r.round == 0)
            .map_or(0.0, |r| r.l_gap),
        mean_duration_error: 0.0,
        end_reason: EndReason::Completed,
        aborted: false,
    }
}
