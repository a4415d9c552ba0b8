//! Plugging your own navigator and controller into the threaded runtime.

use std::thread::sleep;
use std::time::Duration;

use guardrun::runtime::{run_episode, ControllerPort, NavigatorPort, NavigatorRequest, PortError};
use guardrun::{ActionUnit, Continuation, EpisodeConfig, GuardMode, Mode, MonotonicClock, SchedulerConfig};

/// Thinks for 150 ms, then plans three 100 ms steps.
struct Planner {
    next_id: u64,
}

impl NavigatorPort for Planner {
    fn refresh(&mut self, req: &NavigatorRequest) -> Result<Continuation, PortError> {
        sleep(Duration::from_millis(150));
        let units = (0..3)
            .map(|_| {
                self.next_id += 1;
                ActionUnit::primitive(self.next_id, 0.1).unwrap()
            })
            .collect();
        Continuation::new(req.round, units).map_err(|e| PortError::Navigator(e.to_string()))
    }
}

struct Motors;

impl ControllerPort for Motors {
    fn execute(&mut self, unit: &ActionUnit) -> Result<f64, PortError> {
        sleep(Duration::from_secs_f64(unit.predicted_duration));
        Ok(unit.predicted_duration)
    }
}

fn main() {
    let cfg = EpisodeConfig::new(Mode::Live, 6, SchedulerConfig::default()).with_guard(GuardMode::FixedCount(2));
    let out = run_episode(Planner { next_id: 0 }, Motors, cfg, MonotonicClock::new());
    out.audit.verify().expect("only released units ran");
    println!(
        "{} rounds, {} units executed, waited {:.2}s",
        out.report.n_round,
        out.executed.len(),
        out.report.t_wait
    );
}
