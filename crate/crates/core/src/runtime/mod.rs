//! Episode runtimes: the serialized blocking loop and the overlapped
//! guarded-handoff loop.
//!
//! Both loops are implemented once, as the event-driven [`Session`] state
//! machine. A session never sleeps or performs I/O; drivers feed it
//! timestamped events and carry out the [`Effect`]s it returns. The
//! simulator drives it on a virtual clock, while [`run_episode`] drives it
//! with real executor and refresher threads on a monotonic wall clock.

mod session;
mod threaded;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionUnit, Continuation};
use crate::metrics::EpisodeReport;
use crate::scheduler::{SchedulerConfig, SchedulerError};
use crate::tracelog::TraceLog;

pub use session::{Effect, Session};
pub use threaded::{run_blocking_episode, run_episode, run_live_episode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortError {
    #[error("navigator failure: {0}")]
    Navigator(String),
    #[error("controller failure: {0}")]
    Controller(String),
}

/// Everything a navigator gets to condition the next continuation on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigatorRequest {
    pub round: u64,
    /// Opaque handle of the newest observation.
    pub observation: u64,
    /// Units already committed to the controller.
    pub committed_guard: Vec<ActionUnit>,
    /// The still-revisable tail, offered as a hint. Empty when hints are off.
    pub tail_hint: Vec<ActionUnit>,
    pub instruction_id: u64,
}

impl NavigatorRequest {
    pub fn committed_ids(&self) -> Vec<u64> {
        self.committed_guard.iter().map(|u| u.id).collect()
    }
}

pub trait NavigatorPort {
    /// Produces the continuation for `request.round`, with fresh ids.
    fn refresh(&mut self, request: &NavigatorRequest) -> Result<Continuation, PortError>;
}

pub trait ControllerPort {
    /// Executes one unit, blocking until done. Returns the actual duration
    /// in seconds.
    fn execute(&mut self, unit: &ActionUnit) -> Result<f64, PortError>;
}

impl<T: NavigatorPort + ?Sized> NavigatorPort for Box<T> {
    fn refresh(&mut self, request: &NavigatorRequest) -> Result<Continuation, PortError> {
        (**self).refresh(request)
    }
}

impl<T: ControllerPort + ?Sized> ControllerPort for Box<T> {
    fn execute(&mut self, unit: &ActionUnit) -> Result<f64, PortError> {
        (**self).execute(unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Blocking,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuardMode {
    /// Shortest prefix whose predicted duration covers the guard budget.
    #[serde(rename = "adaptive")]
    AdaptiveWallClock,
    /// A fixed number of units per guard.
    #[serde(rename = "fixed")]
    FixedCount(usize),
}

/// Parses `adaptive` or `fixed:N`.
impl std::str::FromStr for GuardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "adaptive" => Ok(GuardMode::AdaptiveWallClock),
            Some(("fixed", n)) => n
                .parse()
                .ok()
                .filter(|&k: &usize| k >= 1)
                .map(GuardMode::FixedCount)
                .ok_or_else(|| format!("bad unit count in `{s}`")),
            _ => Err(format!("expected `adaptive` or `fixed:N`, got `{s}`")),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub mode: Mode,
    pub max_rounds: u64,
    #[serde(default = "default_guard")]
    pub guard: GuardMode,
    pub scheduler: SchedulerConfig,
    /// Delay between a handoff and dispatching the next refresh, seconds.
    #[serde(default)]
    pub refresh_dispatch_delay: f64,
    #[serde(default = "yes")]
    pub send_tail_hint: bool,
    #[serde(default = "yes")]
    pub record_trace: bool,
    #[serde(default)]
    pub instruction_id: u64,
}

fn default_guard() -> GuardMode {
    GuardMode::AdaptiveWallClock
}

impl EpisodeConfig {
    pub fn new(mode: Mode, max_rounds: u64, scheduler: SchedulerConfig) -> Self {
        EpisodeConfig {
            mode,
            max_rounds,
            guard: GuardMode::AdaptiveWallClock,
            scheduler,
            refresh_dispatch_delay: 0.0,
            send_tail_hint: true,
            record_trace: true,
            instruction_id: 0,
        }
    }

    pub fn with_guard(mut self, guard: GuardMode) -> Self {
        self.guard = guard;
        self
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        self.scheduler.validate()?;
        if self.max_rounds < 1 {
            return Err(SchedulerError::Config("max_rounds must be >= 1".into()));
        }
        if self.guard == GuardMode::FixedCount(0) {
            return Err(SchedulerError::Config("fixed guard count must be >= 1".into()));
        }
        if !(self.refresh_dispatch_delay >= 0.0 && self.refresh_dispatch_delay.is_finite()) {
            return Err(SchedulerError::Config(
                "refresh_dispatch_delay must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// What was released, and when, for checking that only guard units (or an
/// explicit backup) ever reach the controller.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    pub releases: Vec<ReleaseRecord>,
    pub backups: Vec<u64>,
    pub issued: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub round: u64,
    pub guard: Vec<u64>,
    pub tail: Vec<u64>,
    /// Number of units issued before this release.
    pub issued_before: usize,
}

impl AuditLog {
    /// Verifies that every issued unit had been released as a guard unit or
    /// designated a backup before it was issued, and that no unit was issued
    /// twice.
    pub fn verify(&self) -> Result<(), String> {
        use std::collections::HashSet;
        let mut allowed: HashSet<u64> = HashSet::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut releases = self.releases.iter().peekable();
        for (pos, id) in self.issued.iter().enumerate() {
            while let Some(r) = releases.peek() {
                if r.issued_before > pos {
                    break;
                }
                allowed.extend(r.guard.iter().copied());
                releases.next();
            }
            if !seen.insert(*id) {
                return Err(format!("unit {id} issued twice"));
            }
            if !allowed.contains(id) && !self.backups.contains(id) {
                return Err(format!("unit {id} issued without being released"));
            }
        }
        Ok(())
    }
}

/// Result of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub report: EpisodeReport,
    pub trace: TraceLog,
    pub audit: AuditLog,
    /// Every unit handed to the controller, in order.
    pub executed: Vec<ActionUnit>,
    pub abort_reason: Option<String>,
}
