//! Overlapped perception, inference and control for action-chunk navigators.
//!
//! A navigator emits short-horizon continuations of timed action units. The
//! runtime releases a guard prefix to the controller and keeps the rest
//! revisable, so the next refresh can be computed while the guard executes.

pub mod action;
pub mod metrics;
pub mod net;
pub mod runtime;
pub mod report;
pub mod scheduler;
pub mod sim;
pub mod time;
pub mod tracelog;

pub use action::{ActionError, ActionKind, ActionUnit, Continuation, ShortHorizonState};
pub use metrics::{EndReason, EpisodeReport, RoundMetrics, RoundTrace};
pub use runtime::{EpisodeConfig, EpisodeOutcome, GuardMode, Mode};
pub use scheduler::{HandoffDecision, LatencyEstimator, SchedulerConfig};
pub use time::{Clock, Micros, MonotonicClock};
pub use tracelog::{analyze_trace, TraceLog};
