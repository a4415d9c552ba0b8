use log::{debug, warn};

use crate::action::{ActionUnit, Continuation, ShortHorizonState};
use crate::metrics::{aggregate_episode, derive_round_metrics, EndReason, RoundTrace};
use crate::scheduler::{
    decide_handoff, guard_budget, select_guard_prefix, update_estimate, HandoffDecision,
    HandoffInputs, LatencyEstimator,
};
use crate::time::Micros;
use crate::tracelog::{EpisodeSummary, TraceLog};

use super::{
    AuditLog, EpisodeConfig, EpisodeOutcome, GuardMode, Mode, NavigatorRequest, PortError,
    ReleaseRecord,
};

/// Something the driver must do on the session's behalf.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    /// Send `request` to the navigator after `delay`. The driver stamps
    /// `t_send` when it actually sends and reports back via
    /// [`Session::on_refresh`].
    Dispatch { request: NavigatorRequest, delay: Micros },
    /// Hand `unit` to the controller; report completion via
    /// [`Session::on_action_done`].
    Issue(ActionUnit),
    /// Call [`Session::on_stall_timeout`] at `deadline` unless the refresh for
    /// `round` arrives first.
    ArmStallTimer { round: u64, deadline: Micros },
    Finished(EndReason),
}

#[derive(Debug)]
struct Arrival {
    t_send: Micros,
    t_recv: Micros,
    continuation: Continuation,
}

#[derive(Debug)]
struct Pending {
    round: u64,
    /// When the controller ran dry waiting for this refresh.
    t_empty: Option<Micros>,
    arrival: Option<Arrival>,
}

#[derive(Debug)]
struct Executing {
    unit: ActionUnit,
    issued_at: Micros,
}

#[derive(Debug)]
struct OpenRound {
    trace: RoundTrace,
    first_unit: Option<u64>,
}

/// Event-driven episode state machine shared by all drivers.
#[derive(Debug)]
pub struct Session {
    cfg: EpisodeConfig,
    start: Micros,
    now: Micros,
    state: Option<ShortHorizonState>,
    estimator: LatencyEstimator,
    psi: f64,
    pending: Option<Pending>,
    executing: Option<Executing>,
    open_round: Option<OpenRound>,
    idle_since: Option<Micros>,
    halted: bool,
    consecutive_backups: u32,
    last_id: Option<u64>,
    dispatched: u64,
    traces: Vec<RoundTrace>,
    wait: Micros,
    trailing_wait: Micros,
    busy: Micros,
    duration_error_sum: f64,
    executed_count: u64,
    audit: AuditLog,
    executed: Vec<ActionUnit>,
    end: Option<(EndReason, Micros)>,
    abort_reason: Option<String>,
    effects: Vec<Effect>,
}

impl Session {
    /// Starts an episode at `now`, dispatching the first refresh.
    pub fn start(cfg: EpisodeConfig, now: Micros) -> (Session, Vec<Effect>) {
        let estimator = LatencyEstimator::new(&cfg.scheduler);
        let psi = guard_budget(&estimator, &cfg.scheduler);
        let mut s = Session {
            cfg,
            start: now,
            now,
            state: None,
            estimator,
            psi,
            pending: None,
            executing: None,
            open_round: None,
            idle_since: Some(now),
            halted: false,
            consecutive_backups: 0,
            last_id: None,
            dispatched: 0,
            traces: Vec::new(),
            wait: Micros::ZERO,
            trailing_wait: Micros::ZERO,
            busy: Micros::ZERO,
            duration_error_sum: 0.0,
            executed_count: 0,
            audit: AuditLog::default(),
            executed: Vec::new(),
            end: None,
            abort_reason: None,
            effects: Vec::new(),
        };
        if let Err(e) = s.cfg.validate() {
            s.abort(format!("invalid configuration: {e}"));
        } else {
            s.dispatch_next(Some(now));
        }
        let effects = std::mem::take(&mut s.effects);
        (s, effects)
    }

    pub fn is_finished(&self) -> bool {
        self.end.is_some()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    /// Current guard budget in seconds.
    pub fn guard_budget(&self) -> f64 {
        self.psi
    }

    pub fn latency_estimate(&self) -> f64 {
        self.estimator.estimate
    }

    /// True while a dispatched refresh has not been answered.
    pub fn has_outstanding_refresh(&self) -> bool {
        self.pending.as_ref().is_some_and(|p| p.arrival.is_none())
    }

    pub fn on_refresh(
        &mut self,
        round: u64,
        t_send: Micros,
        t_recv: Micros,
        result: Result<Continuation, PortError>,
    ) -> Vec<Effect> {
        if self.is_finished() {
            return Vec::new();
        }
        self.tick(t_recv);
        match self.pending.as_ref() {
            Some(p) if p.round == round && p.arrival.is_none() => {}
            _ => {
                self.abort(format!("unexpected refresh for round {round}"));
                return self.drain();
            }
        }
        let continuation = match result {
            Ok(c) => c,
            Err(e) => {
                self.abort(e.to_string());
                return self.drain();
            }
        };
        if let Err(msg) = self.check_continuation(round, &continuation) {
            self.abort(msg);
            return self.drain();
        }
        let latency = t_recv.saturating_sub(t_send).as_secs_f64();
        match update_estimate(self.estimator, latency, &self.cfg.scheduler) {
            Ok(est) => self.estimator = est,
            Err(e) => warn!("latency sample ignored: {e}"),
        }
        self.psi = guard_budget(&self.estimator, &self.cfg.scheduler);
        self.last_id = continuation.units.last().map(|u| u.id);
        debug!(
            "round {round} arrived, latency {latency:.3}s, budget {:.3}s",
            self.psi
        );
        if let Some(p) = self.pending.as_mut() {
            p.arrival = Some(Arrival {
                t_send,
                t_recv: t_recv.max(t_send),
                continuation,
            });
        }
        // an idle controller takes the refresh right away; a busy one picks
        // it up when its guard runs out
        if self.executing.is_none() {
            self.release();
        }
        self.drain()
    }

    pub fn on_action_done(&mut self, now: Micros, actual_secs: f64) -> Vec<Effect> {
        if self.is_finished() {
            return Vec::new();
        }
        self.tick(now);
        let Some(ex) = self.executing.take() else {
            warn!("completion reported with no action in flight");
            return Vec::new();
        };
        self.busy += self.now - ex.issued_at;
        if actual_secs.is_finite() {
            self.duration_error_sum += (actual_secs - ex.unit.predicted_duration).abs();
        }
        self.executed_count += 1;
        self.close_round_if_first(ex.unit.id);
        self.advance();
        self.drain()
    }

    pub fn on_controller_failure(&mut self, now: Micros, error: PortError) -> Vec<Effect> {
        if self.is_finished() {
            return Vec::new();
        }
        self.tick(now);
        self.abort(error.to_string());
        self.drain()
    }

    pub fn on_stall_timeout(&mut self, now: Micros, round: u64) -> Vec<Effect> {
        if self.is_finished() {
            return Vec::new();
        }
        let stalled = self.halted
            && self
                .pending
                .as_ref()
                .is_some_and(|p| p.round == round && p.arrival.is_none());
        if stalled {
            self.tick(now);
            debug!("round {round} stalled past the timeout, stopping");
            self.finish(EndReason::Stopped);
        }
        self.drain()
    }

    /// Ends the episode from outside, e.g. when a driver loses its ports.
    pub fn abort_now(&mut self, now: Micros, reason: impl Into<String>) -> Vec<Effect> {
        if self.is_finished() {
            return Vec::new();
        }
        self.tick(now);
        self.abort(reason.into());
        self.drain()
    }

    pub fn into_outcome(mut self) -> EpisodeOutcome {
        if self.end.is_none() {
            self.abort("episode did not finish".into());
        }
        let (end_reason, end) = self.end.expect("finished");
        let threshold = self.cfg.scheduler.pause_threshold;
        let metrics: Vec<_> = self
            .traces
            .iter()
            .filter_map(|t| derive_round_metrics(t, threshold).ok())
            .collect();
        let mut report = aggregate_episode(
            &metrics,
            self.wait.as_secs_f64(),
            self.busy.as_secs_f64(),
        );
        let mean_duration_error = if self.executed_count == 0 {
            0.0
        } else {
            self.duration_error_sum / self.executed_count as f64
        };
        report.mean_duration_error = mean_duration_error;
        report.end_reason = end_reason;
        report.aborted = end_reason == EndReason::Aborted;
        let trace = TraceLog {
            rounds: self.traces,
            summary: Some(EpisodeSummary {
                start: self.start,
                end,
                end_reason,
                mean_duration_error,
                trailing_wait: self.trailing_wait,
            }),
        };
        EpisodeOutcome {
            report,
            trace,
            audit: self.audit,
            executed: self.executed,
            abort_reason: self.abort_reason,
        }
    }

    fn drain(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.effects)
    }

    fn tick(&mut self, t: Micros) {
        if t > self.now {
            self.now = t;
        }
    }

    fn check_continuation(&self, round: u64, c: &Continuation) -> Result<(), String> {
        if c.round != round {
            return Err(format!("continuation for round {} answered round {round}", c.round));
        }
        c.validate().map_err(|e| format!("round {round}: {e}"))?;
        if c.executed_prefix_len != 0 {
            return Err(format!("round {round}: refreshed continuation already partly executed"));
        }
        if let (Some(last), Some(first)) = (self.last_id, c.units.first()) {
            if first.id <= last {
                return Err(format!("round {round}: id {} reuses or precedes id {last}", first.id));
            }
        }
        Ok(())
    }

    fn guard_len_for(&self, c: &Continuation) -> usize {
        let h = c.horizon();
        match (self.cfg.mode, self.cfg.guard) {
            (Mode::Blocking, _) => h,
            (Mode::Live, GuardMode::FixedCount(k)) => k.clamp(1, h),
            (Mode::Live, GuardMode::AdaptiveWallClock) => {
                select_guard_prefix(&c.units, self.psi).unwrap_or(h)
            }
        }
    }

    fn dispatch_next(&mut self, t_empty: Option<Micros>) {
        let round = self.dispatched;
        self.dispatched += 1;
        let (committed_guard, tail_hint) = match (&self.state, self.cfg.mode) {
            (None, _) => (Vec::new(), Vec::new()),
            (Some(s), Mode::Blocking) => (s.consumed_this_round().to_vec(), Vec::new()),
            (Some(s), Mode::Live) => {
                let tail = if self.cfg.send_tail_hint {
                    s.tail().to_vec()
                } else {
                    Vec::new()
                };
                (s.guard().cloned().collect(), tail)
            }
        };
        self.pending = Some(Pending {
            round,
            t_empty,
            arrival: None,
        });
        self.effects.push(Effect::Dispatch {
            request: NavigatorRequest {
                round,
                observation: round,
                committed_guard,
                tail_hint,
                instruction_id: self.cfg.instruction_id,
            },
            delay: Micros::from_secs_f64(self.cfg.refresh_dispatch_delay),
        });
    }

    /// Installs the arrived refresh as the new short-horizon state and starts
    /// executing its guard.
    fn release(&mut self) {
        let Some(pending) = self.pending.take() else {
            return;
        };
        let Some(arrival) = pending.arrival else {
            self.pending = Some(pending);
            return;
        };
        let k = self.guard_len_for(&arrival.continuation);
        let next = match self.state.take() {
            None => ShortHorizonState::initial(arrival.continuation, k),
            Some(s) => s.apply_handoff(arrival.continuation, k),
        };
        let next = match next {
            Ok(n) => n,
            Err(e) => {
                self.abort(format!("round {}: {e}", pending.round));
                return;
            }
        };
        self.audit.releases.push(ReleaseRecord {
            round: pending.round,
            guard: next.guard().map(|u| u.id).collect(),
            tail: next.tail().iter().map(|u| u.id).collect(),
            issued_before: self.audit.issued.len(),
        });
        if let Some(idle) = self.idle_since.take() {
            self.wait += self.now - idle;
        }
        self.halted = false;
        self.consecutive_backups = 0;
        self.open_round = Some(OpenRound {
            trace: RoundTrace {
                round: pending.round,
                t_send: arrival.t_send,
                t_recv: arrival.t_recv,
                t_empty: pending.t_empty,
                t_issue: self.now,
                t_done: self.now,
            },
            first_unit: None,
        });
        let guard_has_stop = next.guard().any(|u| u.is_stop());
        self.state = Some(next);
        if self.cfg.mode == Mode::Live && !guard_has_stop && self.dispatched < self.cfg.max_rounds {
            self.dispatch_next(None);
        }
        self.advance();
    }

    /// Called whenever the controller becomes free.
    fn advance(&mut self) {
        if self.is_finished() {
            return;
        }
        let Some(state) = self.state.take() else {
            return;
        };
        if state.guard_len() > 0 {
            match state.consume_next() {
                Ok((unit, state)) => {
                    self.state = Some(state);
                    self.issue(unit);
                }
                Err(e) => self.abort(e.to_string()),
            }
            return;
        }
        match self.cfg.mode {
            Mode::Blocking => {
                self.state = Some(state);
                if self.dispatched < self.cfg.max_rounds {
                    self.idle_since = Some(self.now);
                    self.dispatch_next(Some(self.now));
                } else {
                    self.finish(EndReason::Completed);
                }
            }
            Mode::Live => self.handoff(state),
        }
    }

    fn handoff(&mut self, state: ShortHorizonState) {
        let Some(pending) = self.pending.as_ref() else {
            self.state = Some(state);
            self.finish(EndReason::Completed);
            return;
        };
        let (latency, window) = match &pending.arrival {
            Some(a) => (
                (a.t_recv - a.t_send).as_secs_f64(),
                (self.now - a.t_send).as_secs_f64(),
            ),
            None => (f64::INFINITY, 0.0),
        };
        let decision = decide_handoff(
            HandoffInputs {
                refresh_latency: latency,
                guard_time_remaining: window,
                refreshed: pending.arrival.as_ref().map(|a| &a.continuation),
                backup: state.backup_candidate(),
                consecutive_backups: self.consecutive_backups,
                psi: self.psi,
            },
            &self.cfg.scheduler,
        );
        match decision {
            HandoffDecision::Release { .. } => {
                self.state = Some(state);
                self.release();
            }
            HandoffDecision::Backup { .. } => {
                let (unit, state) = state.take_backup();
                self.state = Some(state);
                match unit {
                    Some(unit) => {
                        self.consecutive_backups += 1;
                        self.audit.backups.push(unit.id);
                        debug!("issuing backup unit {}", unit.id);
                        self.issue(unit);
                    }
                    None => self.halt(),
                }
            }
            HandoffDecision::Stop => {
                self.state = Some(state);
                self.halt();
            }
        }
    }

    fn halt(&mut self) {
        self.halted = true;
        self.idle_since = Some(self.now);
        let deadline = self.now + Micros::from_secs_f64(self.cfg.scheduler.stall_timeout);
        if let Some(p) = self.pending.as_mut() {
            p.t_empty = Some(self.now);
            let round = p.round;
            self.effects.push(Effect::ArmStallTimer { round, deadline });
        }
    }

    fn issue(&mut self, unit: ActionUnit) {
        if let Some(open) = self.open_round.as_mut() {
            if open.first_unit.is_none() {
                open.first_unit = Some(unit.id);
            }
        }
        self.audit.issued.push(unit.id);
        if unit.is_stop() {
            self.close_round_if_first(unit.id);
            self.executed.push(unit);
            self.finish(EndReason::Stopped);
            return;
        }
        self.executed.push(unit.clone());
        self.executing = Some(Executing {
            unit: unit.clone(),
            issued_at: self.now,
        });
        self.effects.push(Effect::Issue(unit));
    }

    fn close_round_if_first(&mut self, id: u64) {
        let is_first = self
            .open_round
            .as_ref()
            .is_some_and(|o| o.first_unit == Some(id));
        if !is_first {
            return;
        }
        let mut open = self.open_round.take().expect("checked");
        open.trace.t_done = self.now;
        if self.cfg.record_trace {
            self.traces.push(open.trace);
        }
    }

    fn finish(&mut self, reason: EndReason) {
        if self.end.is_some() {
            return;
        }
        if let Some(idle) = self.idle_since.take() {
            self.trailing_wait = self.now - idle;
            self.wait += self.trailing_wait;
        }
        if let Some(ex) = self.executing.take() {
            self.busy += self.now - ex.issued_at;
        }
        self.pending = None;
        self.end = Some((reason, self.now));
        self.effects.push(Effect::Finished(reason));
    }

    fn abort(&mut self, reason: String) {
        warn!("episode aborted: {reason}");
        self.abort_reason = Some(reason);
        self.finish(EndReason::Aborted);
    }
}
