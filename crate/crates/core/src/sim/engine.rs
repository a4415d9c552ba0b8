use std::collections::BTreeMap;

use crate::action::Continuation;
use crate::runtime::{Effect, EpisodeConfig, EpisodeOutcome, NavigatorPort, PortError, Session};
use crate::time::Micros;

use super::latency::{mix_seed, LatencyStream};
use super::navigator::StubNavigator;
use super::scenario::Scenario;

// at equal times, an arriving refresh counts as on time: arrivals go before
// completions, and both before stall timers
const PRIO_REFRESH: u8 = 0;
const PRIO_DONE: u8 = 1;
const PRIO_STALL: u8 = 2;

enum SimEvent {
    Done { actual: f64 },
    Refresh {
        round: u64,
        t_send: Micros,
        result: Result<Continuation, PortError>,
    },
    Stall { round: u64 },
}

/// Discrete-event queue ordered by (time, priority, insertion order).
struct EventQueue {
    events: BTreeMap<(Micros, u8, u64), SimEvent>,
    seq: u64,
}

impl EventQueue {
    fn new() -> Self {
        EventQueue {
            events: BTreeMap::new(),
            seq: 0,
        }
    }

    fn push(&mut self, at: Micros, prio: u8, ev: SimEvent) {
        self.events.insert((at, prio, self.seq), ev);
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<(Micros, SimEvent)> {
        self.events.pop_first().map(|((t, _, _), ev)| (t, ev))
    }
}

/// Latency sources for one simulated episode.
pub struct SimLatencies {
    pub compute: LatencyStream,
    pub sense: LatencyStream,
    pub overhead: LatencyStream,
}

/// Runs one episode on a virtual clock starting at zero.
///
/// The navigator is consulted at dispatch; its answer becomes visible at
/// `t_recv = t_send + compute`, where `t_send` follows the dispatch by the
/// configured delay plus sensing time.
pub fn simulate_episode<N: NavigatorPort>(
    navigator: &mut N,
    cfg: EpisodeConfig,
    latencies: &mut SimLatencies,
) -> EpisodeOutcome {
    let mut queue = EventQueue::new();
    let (mut session, effects) = Session::start(cfg, Micros::ZERO);
    let mut pending = effects;
    loop {
        let now = session.now();
        for effect in pending.drain(..) {
            match effect {
                Effect::Dispatch { request, delay } => {
                    let t_send = now + delay + Micros::from_secs_f64(latencies.sense.next_secs());
                    let t_recv = t_send + Micros::from_secs_f64(latencies.compute.next_secs());
                    let result = navigator.refresh(&request);
                    queue.push(
                        t_recv,
                        PRIO_REFRESH,
                        SimEvent::Refresh {
                            round: request.round,
                            t_send,
                            result,
                        },
                    );
                }
                Effect::Issue(unit) => {
                    let actual = unit.predicted_duration + latencies.overhead.next_secs();
                    queue.push(now + Micros::from_secs_f64(actual), PRIO_DONE, SimEvent::Done { actual });
                }
                Effect::ArmStallTimer { round, deadline } => {
                    queue.push(deadline, PRIO_STALL, SimEvent::Stall { round });
                }
                Effect::Finished(_) => {}
            }
        }
        if session.is_finished() {
            break;
        }
        let Some((at, event)) = queue.pop() else {
            session.abort_now(now, "simulation ran out of events");
            break;
        };
        pending = match event {
            SimEvent::Done { actual } => session.on_action_done(at, actual),
            SimEvent::Refresh {
                round,
                t_send,
                result,
            } => session.on_refresh(round, t_send, at, result),
            SimEvent::Stall { round } => session.on_stall_timeout(at, round),
        };
    }
    session.into_outcome()
}

/// Builds the navigator and latency streams for episode `index` of `scenario`.
pub fn episode_setup(scenario: &Scenario, index: u64) -> (StubNavigator, SimLatencies) {
    let seed = scenario.seed;
    let nav = StubNavigator::new(
        scenario.horizon,
        scenario.latency.action_duration.clone(),
        mix_seed(seed, index, 4),
    )
    .with_stop_after_units(scenario.stop_after_units)
    .with_stop_after_round(scenario.stop_after_round);
    let lat = SimLatencies {
        compute: scenario.latency.compute.stream(mix_seed(seed, index, 1)),
        sense: scenario.latency.sense.stream(mix_seed(seed, index, 2)),
        overhead: scenario.latency.overhead.stream(mix_seed(seed, index, 3)),
    };
    (nav, lat)
}

pub fn simulate_scenario_episode(scenario: &Scenario, index: u64) -> EpisodeOutcome {
    let (mut nav, mut lat) = episode_setup(scenario, index);
    simulate_episode(&mut nav, scenario.episode_config(), &mut lat)
}

/// Runs every episode of `scenario`. Results depend only on the scenario,
/// including its seed.
pub fn simulate_scenario(scenario: &Scenario) -> Vec<EpisodeOutcome> {
    (0..scenario.episodes)
        .map(|i| simulate_scenario_episode(scenario, i))
        .collect()
}
