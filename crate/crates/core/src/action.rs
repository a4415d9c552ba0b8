//! Action units, continuations and the three-role short-horizon state.
//!
//! A continuation emitted by a navigator is split into a released *guard*
//! (the only units the controller may execute) and a *revisable tail* that
//! stays hidden until a later handoff replaces it. Units consumed since the
//! latest handoff are kept as *executed*.
//!
//! Everything here is a pure value transformation; the runtime owns the
//! state and moves it through these operations.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("{what} {value} out of range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },
    #[error("guard buffer is empty; fall back to a backup action or STOP")]
    Underflow,
    #[error("refreshed continuation is for round {got}, expected round {expected}")]
    Sequencing { expected: u64, got: u64 },
    #[error("continuation for round {round} has no units")]
    EmptyContinuation { round: u64 },
    #[error("action ids must strictly increase: {prev} followed by {next}")]
    IdOrder { prev: u64, next: u64 },
    #[error("invalid predicted duration {duration} for action {id}")]
    Duration { id: u64, duration: f64 },
    #[error("handoff requested while {remaining} guard unit(s) are still pending")]
    GuardNotConsumed { remaining: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Primitive,
    Macro,
    Backup,
    Stop,
}

/// One executable action with its predicted controller-side duration in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionUnit {
    pub id: u64,
    pub kind: ActionKind,
    pub predicted_duration: f64,
}

impl ActionUnit {
    pub fn new(id: u64, kind: ActionKind, predicted_duration: f64) -> Result<Self, ActionError> {
        let valid = predicted_duration.is_finite()
            && predicted_duration >= 0.0
            && (kind != ActionKind::Stop || predicted_duration == 0.0);
        if !valid {
            return Err(ActionError::Duration {
                id,
                duration: predicted_duration,
            });
        }
        Ok(ActionUnit {
            id,
            kind,
            predicted_duration,
        })
    }

    pub fn primitive(id: u64, predicted_duration: f64) -> Result<Self, ActionError> {
        Self::new(id, ActionKind::Primitive, predicted_duration)
    }

    pub fn stop(id: u64) -> Self {
        ActionUnit {
            id,
            kind: ActionKind::Stop,
            predicted_duration: 0.0,
        }
    }

    pub fn is_stop(&self) -> bool {
        self.kind == ActionKind::Stop
    }
}

impl fmt::Display for ActionUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}#{}({:.3}s)", self.kind, self.id, self.predicted_duration)
    }
}

/// The ordered output of one inference round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub round: u64,
    pub units: Vec<ActionUnit>,
    pub executed_prefix_len: usize,
}

impl Continuation {
    /// Builds a fresh (nothing executed) continuation, rejecting empty
    /// sequences and non-increasing ids.
    pub fn new(round: u64, units: Vec<ActionUnit>) -> Result<Self, ActionError> {
        let c = Continuation {
            round,
            units,
            executed_prefix_len: 0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ActionError> {
        if self.units.is_empty() {
            return Err(ActionError::EmptyContinuation { round: self.round });
        }
        if self.executed_prefix_len > self.units.len() {
            return Err(ActionError::Range {
                what: "executed_prefix_len",
                value: self.executed_prefix_len,
                min: 0,
                max: self.units.len(),
            });
        }
        for pair in self.units.windows(2) {
            if pair[1].id <= pair[0].id {
                return Err(ActionError::IdOrder {
                    prev: pair[0].id,
                    next: pair[1].id,
                });
            }
        }
        for u in &self.units {
            ActionUnit::new(u.id, u.kind, u.predicted_duration)?;
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.units.len()
    }

    /// The suffix not yet issued or executed.
    pub fn remaining(&self) -> &[ActionUnit] {
        &self.units[self.executed_prefix_len.min(self.units.len())..]
    }
}

/// Sum of predicted durations over the first `k` units.
pub fn predicted_prefix_time(units: &[ActionUnit], k: usize) -> Result<f64, ActionError> {
    if k > units.len() {
        return Err(ActionError::Range {
            what: "prefix length",
            value: k,
            min: 0,
            max: units.len(),
        });
    }
    Ok(units[..k].iter().map(|u| u.predicted_duration).sum())
}

/// Splits a freshly refreshed continuation into a released guard of `k`
/// units and the revisable tail.
pub fn split_at(
    continuation: &Continuation,
    k: usize,
) -> Result<(Vec<ActionUnit>, Vec<ActionUnit>), ActionError> {
    let h = continuation.units.len();
    if k == 0 || k > h {
        return Err(ActionError::Range {
            what: "guard length",
            value: k,
            min: 1,
            max: h,
        });
    }
    if continuation.executed_prefix_len != 0 {
        return Err(ActionError::Range {
            what: "executed_prefix_len",
            value: continuation.executed_prefix_len,
            min: 0,
            max: 0,
        });
    }
    let (guard, tail) = continuation.units.split_at(k);
    Ok((guard.to_vec(), tail.to_vec()))
}

/// The runtime's view of the in-flight continuation: `[executed | guard | tail]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortHorizonState {
    round: u64,
    executed: Vec<ActionUnit>,
    // index into `executed` where units issued from the current guard begin
    round_start: usize,
    guard: VecDeque<ActionUnit>,
    tail: Vec<ActionUnit>,
}

impl ShortHorizonState {
    /// State after the very first refresh: nothing executed yet.
    pub fn initial(refreshed: Continuation, k_star: usize) -> Result<Self, ActionError> {
        refreshed.validate()?;
        let (guard, tail) = split_at(&refreshed, k_star)?;
        Ok(ShortHorizonState {
            round: refreshed.round,
            executed: Vec::new(),
            round_start: 0,
            guard: guard.into(),
            tail,
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn executed(&self) -> &[ActionUnit] {
        &self.executed
    }

    /// Units issued since the latest handoff.
    pub fn consumed_this_round(&self) -> &[ActionUnit] {
        &self.executed[self.round_start..]
    }

    pub fn guard(&self) -> impl ExactSizeIterator<Item = &ActionUnit> {
        self.guard.iter()
    }

    pub fn guard_len(&self) -> usize {
        self.guard.len()
    }

    pub fn tail(&self) -> &[ActionUnit] {
        &self.tail
    }

    /// Predicted execution time of the guard units not yet issued.
    pub fn guard_time(&self) -> f64 {
        self.guard.iter().map(|u| u.predicted_duration).sum()
    }

    /// Issues the first guard unit, moving it to `executed`.
    pub fn consume_next(mut self) -> Result<(ActionUnit, Self), ActionError> {
        let unit = self.guard.pop_front().ok_or(ActionError::Underflow)?;
        self.executed.push(unit.clone());
        Ok((unit, self))
    }

    /// Promotes the first tail unit to a one-step backup action. The unit
    /// keeps its id and is relabelled [`ActionKind::Backup`].
    pub fn take_backup(mut self) -> (Option<ActionUnit>, Self) {
        if self.tail.is_empty() || !self.guard.is_empty() {
            return (None, self);
        }
        let mut unit = self.tail.remove(0);
        if unit.is_stop() {
            self.tail.insert(0, unit);
            return (None, self);
        }
        unit.kind = ActionKind::Backup;
        self.executed.push(unit.clone());
        (Some(unit), self)
    }

    /// The candidate backup, if any: the first unit of the revisable tail.
    pub fn backup_candidate(&self) -> Option<&ActionUnit> {
        self.tail.first().filter(|u| !u.is_stop())
    }

    /// Installs a refreshed continuation once the current guard is consumed.
    /// The consumed guard (plus any backup issued after it) becomes the new
    /// `executed`; the previous tail is discarded.
    pub fn apply_handoff(self, refreshed: Continuation, k_star: usize) -> Result<Self, ActionError> {
        if refreshed.round != self.round + 1 {
            return Err(ActionError::Sequencing {
                expected: self.round + 1,
                got: refreshed.round,
            });
        }
        if !self.guard.is_empty() {
            return Err(ActionError::GuardNotConsumed {
                remaining: self.guard.len(),
            });
        }
        refreshed.validate()?;
        let (guard, tail) = split_at(&refreshed, k_star)?;
        if let (Some(last), Some(first)) = (self.executed.last(), guard.first()) {
            if first.id <= last.id {
                return Err(ActionError::IdOrder {
                    prev: last.id,
                    next: first.id,
                });
            }
        }
        let executed = self.executed[self.round_start..].to_vec();
        Ok(ShortHorizonState {
            round: refreshed.round,
            round_start: executed.len(),
            executed,
            guard: guard.into(),
            tail,
        })
    }

    /// Checks the partition invariant: ids strictly increase across
    /// `executed ++ guard ++ tail`.
    pub fn check_partition(&self) -> Result<(), ActionError> {
        let mut prev: Option<u64> = None;
        for u in self.executed.iter().chain(self.guard.iter()).chain(self.tail.iter()) {
            if let Some(p) = prev {
                if u.id <= p {
                    return Err(ActionError::IdOrder { prev: p, next: u.id });
                }
            }
            prev = Some(u.id);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn units(start: u64, durations: &[f64]) -> Vec<ActionUnit> {
        durations
            .iter()
            .enumerate()
            .map(|(i, d)| ActionUnit::primitive(start + i as u64, *d).unwrap())
            .collect()
    }

    fn cont(round: u64, start: u64, durations: &[f64]) -> Continuation {
        Continuation::new(round, units(start, durations)).unwrap()
    }

    fn ids<'a>(it: impl IntoIterator<Item = &'a ActionUnit>) -> Vec<u64> {
        it.into_iter().map(|u| u.id).collect()
    }

    #[test]
    fn prefix_time_examples() {
        let u = units(1, &[1.14, 1.14, 1.14, 1.14]);
        assert_relative_eq!(predicted_prefix_time(&u, 2).unwrap(), 2.28, epsilon = 1e-12);
        assert_eq!(predicted_prefix_time(&u, 0).unwrap(), 0.0);
        let u = units(1, &[0.5, 1.0, 0.25]);
        assert_eq!(predicted_prefix_time(&u, 3).unwrap(), 1.75);
        assert!(matches!(
            predicted_prefix_time(&u, 4),
            Err(ActionError::Range { .. })
        ));
    }

    #[test]
    fn stop_must_have_zero_duration() {
        assert!(ActionUnit::new(1, ActionKind::Stop, 0.5).is_err());
        assert!(ActionUnit::new(1, ActionKind::Primitive, -0.1).is_err());
        assert!(ActionUnit::new(1, ActionKind::Macro, f64::NAN).is_err());
        assert_eq!(ActionUnit::stop(9).predicted_duration, 0.0);
    }

    #[test]
    fn empty_or_unordered_continuations_rejected() {
        assert_eq!(
            Continuation::new(3, vec![]),
            Err(ActionError::EmptyContinuation { round: 3 })
        );
        let mut u = units(1, &[1.0, 1.0]);
        u[1].id = 1;
        assert!(matches!(
            Continuation::new(0, u),
            Err(ActionError::IdOrder { prev: 1, next: 1 })
        ));
    }

    #[test]
    fn split_examples() {
        let c = cont(0, 1, &[1.0; 4]);
        let (g, t) = split_at(&c, 2).unwrap();
        assert_eq!(ids(&g), vec![1, 2]);
        assert_eq!(ids(&t), vec![3, 4]);

        let c = cont(0, 1, &[1.0; 3]);
        let (g, t) = split_at(&c, 3).unwrap();
        assert_eq!(g.len(), 3);
        assert!(t.is_empty());

        let c = cont(0, 1, &[1.0; 5]);
        let (g, t) = split_at(&c, 1).unwrap();
        assert_eq!(ids(&g), vec![1]);
        assert_eq!(ids(&t), vec![2, 3, 4, 5]);

        assert!(split_at(&c, 0).is_err());
        assert!(split_at(&c, 6).is_err());
    }

    #[test]
    fn split_requires_fresh_continuation() {
        let mut c = cont(0, 1, &[1.0; 3]);
        c.executed_prefix_len = 1;
        assert!(split_at(&c, 1).is_err());
    }

    #[test]
    fn consume_moves_one_unit() {
        let s = ShortHorizonState::initial(cont(0, 1, &[1.0, 1.0]), 2).unwrap();
        let (a, s) = s.consume_next().unwrap();
        assert_eq!(a.id, 1);
        assert_eq!(ids(s.executed()), vec![1]);
        assert_eq!(ids(s.guard()), vec![2]);
    }

    #[test]
    fn consume_leaves_tail_untouched() {
        let s = ShortHorizonState::initial(cont(0, 1, &[1.0, 1.0, 1.0]), 1).unwrap();
        let (a, s) = s.consume_next().unwrap();
        assert_eq!(a.id, 1);
        assert_eq!(s.guard_len(), 0);
        assert_eq!(ids(s.tail()), vec![2, 3]);
        assert_eq!(s.consume_next().unwrap_err(), ActionError::Underflow);
    }

    #[test]
    fn handoff_example() {
        let s = ShortHorizonState::initial(cont(0, 1, &[1.0, 1.0, 1.0]), 2).unwrap();
        let (_, s) = s.consume_next().unwrap();
        let (_, s) = s.consume_next().unwrap();
        let s = s.apply_handoff(cont(1, 10, &[1.0; 4]), 2).unwrap();
        assert_eq!(s.round(), 1);
        assert_eq!(ids(s.executed()), vec![1, 2]);
        assert_eq!(ids(s.guard()), vec![10, 11]);
        assert_eq!(ids(s.tail()), vec![12, 13]);
        s.check_partition().unwrap();
    }

    #[test]
    fn handoff_minimal_continuation() {
        let s = ShortHorizonState::initial(cont(0, 1, &[1.0]), 1).unwrap();
        let (_, s) = s.consume_next().unwrap();
        let s = s.apply_handoff(cont(1, 2, &[1.0]), 1).unwrap();
        assert!(s.tail().is_empty());
    }

    #[test]
    fn handoff_errors() {
        let s = ShortHorizonState::initial(cont(0, 1, &[1.0]), 1).unwrap();
        assert!(matches!(
            s.clone().apply_handoff(cont(1, 2, &[1.0]), 1),
            Err(ActionError::GuardNotConsumed { remaining: 1 })
        ));
        let (_, s) = s.consume_next().unwrap();
        assert_eq!(
            s.clone().apply_handoff(cont(2, 2, &[1.0]), 1),
            Err(ActionError::Sequencing {
                expected: 1,
                got: 2
            })
        );
        assert!(matches!(
            s.clone().apply_handoff(cont(1, 2, &[1.0, 1.0]), 3),
            Err(ActionError::Range { .. })
        ));
        assert!(matches!(
            s.apply_handoff(cont(1, 1, &[1.0]), 1),
            Err(ActionError::IdOrder { .. })
        ));
    }

    #[test]
    fn backup_comes_from_tail_head() {
        let s = ShortHorizonState::initial(cont(0, 1, &[1.0, 0.7, 0.3]), 1).unwrap();
        assert!(s.clone().take_backup().0.is_none(), "guard still pending");
        let (_, s) = s.consume_next().unwrap();
        assert_eq!(s.backup_candidate().map(|u| u.id), Some(2));
        let (b, s) = s.take_backup();
        let b = b.unwrap();
        assert_eq!((b.id, b.kind), (2, ActionKind::Backup));
        assert_eq!(ids(s.executed()), vec![1, 2]);
        assert_eq!(ids(s.tail()), vec![3]);
        s.check_partition().unwrap();
    }

    proptest! {
        #[test]
        fn prefix_time_is_additive_and_monotone(d in prop::collection::vec(0.0f64..5.0, 1..16)) {
            let u = units(1, &d);
            // independent running-sum oracle
            let mut acc = 0.0;
            for k in 0..=u.len() {
                let t = predicted_prefix_time(&u, k).unwrap();
                prop_assert!((t - acc).abs() <= 1e-9);
                if let Some(dk) = d.get(k) {
                    let next = predicted_prefix_time(&u, k + 1).unwrap();
                    prop_assert!(next >= t);
                    acc += dk;
                }
            }
        }

        #[test]
        fn split_reconcatenates(h in 1usize..12, k_frac in 0.0f64..1.0) {
            let c = cont(0, 100, &vec![0.5; h]);
            let k = 1 + ((h - 1) as f64 * k_frac) as usize;
            let (g, t) = split_at(&c, k).unwrap();
            prop_assert_eq!(g.len(), k);
            let joined: Vec<_> = g.into_iter().chain(t).collect();
            prop_assert_eq!(joined, c.units);
        }

        #[test]
        fn folding_consumption_yields_guard_in_order(h in 1usize..10, k_frac in 0.0f64..1.0) {
            let c = cont(0, 1, &vec![1.0; h]);
            let k = 1 + ((h - 1) as f64 * k_frac) as usize;
            let mut s = ShortHorizonState::initial(c.clone(), k).unwrap();
            let mut issued = Vec::new();
            while s.guard_len() > 0 {
                let before = s.executed().len();
                let (u, next) = s.consume_next().unwrap();
                prop_assert_eq!(next.executed().len(), before + 1);
                issued.push(u);
                s = next;
            }
            prop_assert_eq!(&issued[..], &c.units[..k]);
            prop_assert_eq!(s.tail(), &c.units[k..]);
        }

        #[test]
        fn successive_handoffs_keep_global_order(
            rounds in prop::collection::vec((1usize..6, 0.0f64..1.0), 3..6)
        ) {
            // replay oracle: concatenated executed logs must be id-sorted
            let mut next_id = 1u64;
            let mut mk = |round: u64, h: usize| {
                let c = cont(round, next_id, &vec![1.0; h]);
                next_id += h as u64;
                c
            };
            let (h0, f0) = rounds[0];
            let k0 = 1 + ((h0 - 1) as f64 * f0) as usize;
            let mut s = ShortHorizonState::initial(mk(0, h0), k0).unwrap();
            let mut log: Vec<u64> = Vec::new();
            for (r, (h, f)) in rounds.iter().enumerate().skip(1) {
                while s.guard_len() > 0 {
                    let (u, n) = s.consume_next().unwrap();
                    log.push(u.id);
                    s = n;
                }
                let k = 1 + ((h - 1) as f64 * f) as usize;
                s = s.apply_handoff(mk(r as u64, *h), k).unwrap();
                s.check_partition().unwrap();
                prop_assert!(log.ends_with(&ids(s.executed())));
            }
            prop_assert!(log.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
