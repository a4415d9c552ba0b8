use std::collections::HashMap;

use crate::action::{ActionUnit, Continuation};
use crate::runtime::{NavigatorPort, NavigatorRequest, PortError};

use super::latency::LatencyModel;

/// Deterministic navigator that walks a fixed plan of action units.
///
/// Plan position `p` always gets the same predicted duration for a given
/// seed, so blocking and overlapped runs over one seed execute the same
/// work. Each refresh resumes right after the last committed unit and
/// stamps fresh ids.
#[derive(Debug, Clone)]
pub struct StubNavigator {
    pub horizon: usize,
    pub action_duration: LatencyModel,
    pub seed: u64,
    /// Answer with a lone stop unit from this round on.
    pub stop_after_round: Option<u64>,
    /// Total plan length; the navigator stops once it is used up.
    pub stop_after_units: Option<u64>,
    /// Record requests whose committed units are not a prefix of the last
    /// continuation sent.
    pub respects_guard: bool,
    positions: HashMap<u64, u64>,
    next_id: u64,
    latest: Option<Continuation>,
    violations: Vec<String>,
}

impl StubNavigator {
    pub fn new(horizon: usize, action_duration: LatencyModel, seed: u64) -> Self {
        StubNavigator {
            horizon: horizon.max(1),
            action_duration,
            seed,
            stop_after_round: None,
            stop_after_units: None,
            respects_guard: true,
            positions: HashMap::new(),
            next_id: 1,
            latest: None,
            violations: Vec::new(),
        }
    }

    pub fn with_stop_after_units(mut self, units: Option<u64>) -> Self {
        self.stop_after_units = units;
        self
    }

    pub fn with_stop_after_round(mut self, round: Option<u64>) -> Self {
        self.stop_after_round = round;
        self
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    /// Duration assigned to plan position `position`.
    pub fn planned_duration(&self, position: u64) -> f64 {
        self.action_duration.sample_at(self.seed, position)
    }

    fn audit(&mut self, request: &NavigatorRequest) {
        let Some(latest) = &self.latest else {
            return;
        };
        let committed = request.committed_ids();
        let sent: Vec<u64> = latest.units.iter().map(|u| u.id).collect();
        if !sent.starts_with(&committed) {
            self.violations.push(format!(
                "round {}: committed {committed:?} is not a prefix of {sent:?}",
                request.round
            ));
        }
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Builds the next continuation without any port plumbing.
    pub fn next_continuation(&mut self, request: &NavigatorRequest) -> Continuation {
        if self.respects_guard {
            self.audit(request);
        }
        let start = match request.committed_guard.last() {
            Some(u) => self.positions.get(&u.id).map_or(0, |p| p + 1),
            None => 0,
        };
        let stop_now = self.stop_after_round.is_some_and(|r| request.round >= r)
            || self.stop_after_units.is_some_and(|n| start >= n);
        let units = if stop_now {
            vec![ActionUnit::stop(self.fresh_id())]
        } else {
            let end = match self.stop_after_units {
                Some(n) => (start + self.horizon as u64).min(n),
                None => start + self.horizon as u64,
            };
            let mut units = Vec::with_capacity(self.horizon);
            for pos in start..end {
                let id = self.fresh_id();
                self.positions.insert(id, pos);
                let d = self.planned_duration(pos);
                units.push(ActionUnit::primitive(id, d).expect("durations are non-negative"));
            }
            if units.len() < self.horizon {
                units.push(ActionUnit::stop(self.fresh_id()));
            }
            units
        };
        let c = Continuation::new(request.round, units).expect("ids increase");
        self.latest = Some(c.clone());
        c
    }
}

impl NavigatorPort for StubNavigator {
    fn refresh(&mut self, request: &NavigatorRequest) -> Result<Continuation, PortError> {
        Ok(self.next_continuation(request))
    }
}
