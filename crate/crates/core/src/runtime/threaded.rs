//! Wall-clock driver: a refresher thread owns the navigator, an executor
//! thread owns the controller, and the calling thread runs the session.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;

use crate::action::{ActionUnit, Continuation};
use crate::time::{Clock, Micros};

use super::{
    ControllerPort, Effect, EpisodeConfig, EpisodeOutcome, Mode, NavigatorPort, NavigatorRequest,
    PortError, Session,
};

enum Event {
    Refreshed {
        round: u64,
        t_send: Micros,
        t_recv: Micros,
        result: Result<Continuation, PortError>,
    },
    Done {
        at: Micros,
        actual: f64,
    },
    Failed {
        at: Micros,
        error: PortError,
    },
}

/// Runs one episode in real time with the mode given in `cfg`.
///
/// Navigator calls never block the controller: a refresh is in flight
/// while the current guard executes.
pub fn run_episode<N, C, K>(navigator: N, controller: C, cfg: EpisodeConfig, clock: K) -> EpisodeOutcome
where
    N: NavigatorPort + Send + 'static,
    C: ControllerPort + Send + 'static,
    K: Clock + Clone + Send + 'static,
{
    let (event_tx, event_rx) = mpsc::channel::<Event>();
    let (request_tx, request_rx) = mpsc::channel::<(NavigatorRequest, Micros)>();
    let (unit_tx, unit_rx) = mpsc::channel::<ActionUnit>();

    let refresher = {
        let tx = event_tx.clone();
        let clock = clock.clone();
        let mut navigator = navigator;
        thread::spawn(move || {
            for (request, delay) in request_rx {
                if delay > Micros::ZERO {
                    thread::sleep(delay.as_duration());
                }
                let t_send = clock.now();
                let result = navigator.refresh(&request);
                let t_recv = clock.now();
                let ev = Event::Refreshed {
                    round: request.round,
                    t_send,
                    t_recv,
                    result,
                };
                if tx.send(ev).is_err() {
                    break;
                }
            }
        })
    };
    let executor = {
        let tx = event_tx;
        let clock = clock.clone();
        let mut controller = controller;
        thread::spawn(move || {
            for unit in unit_rx {
                let ev = match controller.execute(&unit) {
                    Ok(actual) => Event::Done {
                        at: clock.now(),
                        actual,
                    },
                    Err(error) => Event::Failed {
                        at: clock.now(),
                        error,
                    },
                };
                if tx.send(ev).is_err() {
                    break;
                }
            }
        })
    };

    let (mut session, effects) = Session::start(cfg, clock.now());
    let mut stall: Option<(u64, Micros)> = None;
    let apply = move |effects: Vec<Effect>, stall: &mut Option<(u64, Micros)>| -> bool {
        let mut ok = true;
        for effect in effects {
            match effect {
                Effect::Dispatch { request, delay } => {
                    ok &= request_tx.send((request, delay)).is_ok();
                }
                Effect::Issue(unit) => ok &= unit_tx.send(unit).is_ok(),
                Effect::ArmStallTimer { round, deadline } => *stall = Some((round, deadline)),
                Effect::Finished(_) => {}
            }
        }
        ok
    };
    if !apply(effects, &mut stall) {
        session.abort_now(clock.now(), "worker thread exited");
    }

    while !session.is_finished() {
        let event = match stall {
            Some((round, deadline)) => {
                let now = clock.now();
                if now >= deadline {
                    stall = None;
                    let fx = session.on_stall_timeout(deadline, round);
                    if !apply(fx, &mut stall) {
                        session.abort_now(clock.now(), "worker thread exited");
                    }
                    continue;
                }
                match event_rx.recv_timeout((deadline - now).as_duration()) {
                    Ok(ev) => ev,
                    Err(RecvTimeoutError::Timeout) => continue,
                    Err(RecvTimeoutError::Disconnected) => {
                        session.abort_now(clock.now(), "worker threads disconnected");
                        break;
                    }
                }
            }
            None => match event_rx.recv() {
                Ok(ev) => ev,
                Err(_) => {
                    session.abort_now(clock.now(), "worker threads disconnected");
                    break;
                }
            },
        };
        let fx = match event {
            Event::Refreshed {
                round,
                t_send,
                t_recv,
                result,
            } => session.on_refresh(round, t_send, t_recv, result),
            Event::Done { at, actual } => session.on_action_done(at, actual),
            Event::Failed { at, error } => session.on_controller_failure(at, error),
        };
        if !apply(fx, &mut stall) {
            session.abort_now(clock.now(), "worker thread exited");
        }
    }

    let outstanding = session.has_outstanding_refresh();
    // closes both work channels
    drop(apply);
    // the executor finishes its current unit at most
    let _ = executor.join();
    if !outstanding {
        let _ = refresher.join();
    }
    // otherwise the refresher is blocked on the navigator; it exits once the
    // call returns and its send fails
    session.into_outcome()
}

/// Serialized loop: each refresh waits for the previous continuation to run
/// out, and the whole continuation executes.
pub fn run_blocking_episode<N, C, K>(navigator: N, controller: C, mut cfg: EpisodeConfig, clock: K) -> EpisodeOutcome
where
    N: NavigatorPort + Send + 'static,
    C: ControllerPort + Send + 'static,
    K: Clock + Clone + Send + 'static,
{
    cfg.mode = Mode::Blocking;
    run_episode(navigator, controller, cfg, clock)
}

/// Overlapped loop with guarded handoff.
pub fn run_live_episode<N, C, K>(navigator: N, controller: C, mut cfg: EpisodeConfig, clock: K) -> EpisodeOutcome
where
    N: NavigatorPort + Send + 'static,
    C: ControllerPort + Send + 'static,
    K: Clock + Clone + Send + 'static,
{
    cfg.mode = Mode::Live;
    run_episode(navigator, controller, cfg, clock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::SchedulerConfig;
    use crate::time::MonotonicClock;
    use std::time::Duration;

    struct SlowNav {
        latency: Duration,
        next_id: u64,
    }

    impl NavigatorPort for SlowNav {
        fn refresh(&mut self, request: &NavigatorRequest) -> Result<Continuation, PortError> {
            thread::sleep(self.latency);
            let units = (0..4)
                .map(|i| ActionUnit::primitive(self.next_id + i, 0.03).unwrap())
                .collect();
            self.next_id += 4;
            Continuation::new(request.round, units).map_err(|e| PortError::Navigator(e.to_string()))
        }
    }

    struct SleepCtl;

    impl ControllerPort for SleepCtl {
        fn execute(&mut self, unit: &ActionUnit) -> Result<f64, PortError> {
            thread::sleep(Duration::from_secs_f64(unit.predicted_duration));
            Ok(unit.predicted_duration)
        }
    }

    struct FailingCtl;

    impl ControllerPort for FailingCtl {
        fn execute(&mut self, _: &ActionUnit) -> Result<f64, PortError> {
            Err(PortError::Controller("motor fault".into()))
        }
    }

    fn sched() -> SchedulerConfig {
        SchedulerConfig {
            initial_estimate: 0.05,
            max_consecutive_backups: 0,
            stall_timeout: 2.0,
            ..SchedulerConfig::default()
        }
    }

    #[test]
    fn live_hides_latency_behind_guard() {
        let nav = SlowNav {
            latency: Duration::from_millis(40),
            next_id: 1,
        };
        let cfg = EpisodeConfig::new(Mode::Live, 5, sched());
        let out = run_live_episode(nav, SleepCtl, cfg, MonotonicClock::new());
        assert_eq!(out.report.n_round, 5);
        assert!(out.audit.verify().is_ok());
        let blocking = run_blocking_episode(
            SlowNav {
                latency: Duration::from_millis(40),
                next_id: 1,
            },
            SleepCtl,
            EpisodeConfig::new(Mode::Blocking, 5, sched()),
            MonotonicClock::new(),
        );
        assert_eq!(blocking.report.n_round, 5);
        assert!(blocking.report.t_wait >= 0.2);
        assert!(out.report.t_wait < blocking.report.t_wait);
    }

    #[test]
    fn controller_failure_aborts() {
        let nav = SlowNav {
            latency: Duration::from_millis(1),
            next_id: 1,
        };
        let cfg = EpisodeConfig::new(Mode::Live, 3, sched());
        let out = run_live_episode(nav, FailingCtl, cfg, MonotonicClock::new());
        assert!(out.report.aborted);
        assert!(out.abort_reason.unwrap().contains("motor fault"));
    }
}
