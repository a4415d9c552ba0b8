//! Latency-adaptive guard sizing.
//!
//! The refresh path keeps an exponentially weighted estimate of the
//! sense-and-inference latency, turns it into a guard budget by adding a
//! safety margin, and releases the shortest prefix of each refreshed
//! continuation whose predicted execution time covers that budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionUnit, Continuation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("latency sample must be a finite non-negative number of seconds, got {0}")]
    Measurement(f64),
    #[error("cannot select a guard from an empty continuation")]
    EmptyUnits,
    #[error("{0}")]
    Config(String),
}

fn default_pause_threshold() -> f64 {
    0.5
}

fn default_max_backups() -> u32 {
    1
}

fn default_stall_timeout() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    /// EWMA update factor, in (0, 1].
    pub alpha: f64,
    /// Safety margin added to the latency estimate, seconds.
    pub delta: f64,
    /// Estimate used before the first latency measurement, seconds.
    pub initial_estimate: f64,
    /// Visible gaps strictly longer than this count as pauses.
    #[serde(default = "default_pause_threshold")]
    pub pause_threshold: f64,
    #[serde(default = "default_max_backups", rename = "max_backups")]
    pub max_consecutive_backups: u32,
    /// How long a halted controller waits for a late refresh before the
    /// STOP becomes final, seconds.
    #[serde(default = "default_stall_timeout")]
    pub stall_timeout: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            alpha: 0.5,
            delta: 0.0,
            initial_estimate: 0.0,
            pause_threshold: default_pause_threshold(),
            max_consecutive_backups: default_max_backups(),
            stall_timeout: default_stall_timeout(),
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let bad = |msg: &str| Err(SchedulerError::Config(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0,1]");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta must be >= 0");
        }
        if !(self.initial_estimate >= 0.0 && self.initial_estimate.is_finite()) {
            return bad("initial_estimate must be >= 0");
        }
        if !(self.pause_threshold > 0.0 && self.pause_threshold.is_finite()) {
            return bad("pause_threshold must be > 0");
        }
        if !(self.stall_timeout >= 0.0 && self.stall_timeout.is_finite()) {
            return bad("stall_timeout must be >= 0");
        }
        Ok(())
    }
}

/// Running sense-and-inference latency estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimator {
    pub estimate: f64,
    pub samples_seen: u64,
}

impl LatencyEstimator {
    pub fn new(cfg: &SchedulerConfig) -> Self {
        LatencyEstimator {
            estimate: cfg.initial_estimate,
            samples_seen: 0,
        }
    }
}

/// Folds one latency measurement into the estimate.
///
/// The first measurement replaces the configured prior outright; later ones
/// blend as `(1 - alpha) * old + alpha * sample`.
pub fn update_estimate(
    est: LatencyEstimator,
    sample: f64,
    cfg: &SchedulerConfig,
) -> Result<LatencyEstimator, SchedulerError> {
    if !(sample >= 0.0 && sample.is_finite()) {
        return Err(SchedulerError::Measurement(sample));
    }
    let estimate = if est.samples_seen == 0 {
        sample
    } else {
        let blended = (1.0 - cfg.alpha) * est.estimate + cfg.alpha * sample;
        // a convex combination lies between its endpoints; clamp away rounding
        blended.clamp(est.estimate.min(sample), est.estimate.max(sample))
    };
    Ok(LatencyEstimator {
        estimate,
        samples_seen: est.samples_seen + 1,
    })
}

pub fn guard_budget(est: &LatencyEstimator, cfg: &SchedulerConfig) -> f64 {
    est.estimate + cfg.delta
}

/// Shortest prefix length whose predicted execution time reaches `psi`,
/// clamped to the full horizon. Never returns zero.
pub fn select_guard_prefix(units: &[ActionUnit], psi: f64) -> Result<usize, SchedulerError> {
    if units.is_empty() {
        return Err(SchedulerError::EmptyUnits);
    }
    let mut covered = 0.0;
    for (i, u) in units.iter().enumerate() {
        covered += u.predicted_duration;
        if covered >= psi {
            return Ok(i + 1);
        }
    }
    Ok(units.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HandoffDecision {
    Release { k_star: usize },
    Backup { unit: ActionUnit },
    Stop,
}

/// Inputs to one handoff decision.
#[derive(Debug, Clone, Copy)]
pub struct HandoffInputs<'a> {
    /// Latency of the pending refresh (or time elapsed so far when it has
    /// not arrived).
    pub refresh_latency: f64,
    /// Execution time the released guard bought, measured from dispatch.
    pub guard_time_remaining: f64,
    pub refreshed: Option<&'a Continuation>,
    pub backup: Option<&'a ActionUnit>,
    pub consecutive_backups: u32,
    /// Guard budget for the next guard.
    pub psi: f64,
}

pub fn decide_handoff(inputs: HandoffInputs<'_>, cfg: &SchedulerConfig) -> HandoffDecision {
    if let Some(refreshed) = inputs.refreshed {
        if inputs.refresh_latency <= inputs.guard_time_remaining {
            if let Ok(k_star) = select_guard_prefix(&refreshed.units, inputs.psi) {
                return HandoffDecision::Release { k_star };
            }
        }
    }
    match inputs.backup {
        Some(unit) if inputs.consecutive_backups < cfg.max_consecutive_backups => {
            HandoffDecision::Backup { unit: unit.clone() }
        }
        _ => HandoffDecision::Stop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(alpha: f64, delta: f64) -> SchedulerConfig {
        SchedulerConfig {
            alpha,
            delta,
            ..SchedulerConfig::default()
        }
    }

    fn seen(estimate: f64) -> LatencyEstimator {
        LatencyEstimator {
            estimate,
            samples_seen: 3,
        }
    }

    fn units(d: &[f64]) -> Vec<ActionUnit> {
        d.iter()
            .enumerate()
            .map(|(i, x)| ActionUnit::primitive(i as u64 + 1, *x).unwrap())
            .collect()
    }

    // brute force: try every k, keep the smallest qualifying one
    fn brute_force_k(d: &[f64], psi: f64) -> usize {
        let u = units(d);
        (1..=d.len())
            .filter(|&k| crate::action::predicted_prefix_time(&u, k).unwrap() >= psi)
            .min()
            .unwrap_or(d.len())
    }

    #[test]
    fn ewma_examples() {
        let c = cfg(1.0, 0.0);
        assert_eq!(update_estimate(seen(5.0), 0.97, &c).unwrap().estimate, 0.97);
        let c = cfg(0.5, 0.0);
        assert_eq!(update_estimate(seen(1.0), 0.5, &c).unwrap().estimate, 0.75);
    }

    #[test]
    fn first_sample_replaces_prior() {
        let c = SchedulerConfig {
            initial_estimate: 3.0,
            ..cfg(0.1, 0.0)
        };
        let est = LatencyEstimator::new(&c);
        assert_eq!(est.estimate, 3.0);
        let est = update_estimate(est, 0.4, &c).unwrap();
        assert_eq!((est.estimate, est.samples_seen), (0.4, 1));
    }

    #[test]
    fn constant_samples_are_a_fixed_point() {
        let c = cfg(0.3, 0.0);
        let mut est = LatencyEstimator::new(&c);
        for _ in 0..50 {
            est = update_estimate(est, 0.81, &c).unwrap();
            assert_eq!(est.estimate, 0.81);
        }
    }

    #[test]
    fn negative_sample_rejected() {
        let c = cfg(0.5, 0.0);
        assert_eq!(
            update_estimate(seen(1.0), -0.1, &c),
            Err(SchedulerError::Measurement(-0.1))
        );
        assert!(update_estimate(seen(1.0), f64::NAN, &c).is_err());
    }

    #[test]
    fn budget_examples() {
        assert_relative_eq!(guard_budget(&seen(0.52), &cfg(0.5, 0.2)), 0.72, epsilon = 1e-12);
        assert_eq!(guard_budget(&seen(0.97), &cfg(0.5, 0.0)), 0.97);
        assert_eq!(guard_budget(&seen(0.0), &cfg(0.5, 0.0)), 0.0);
    }

    #[test]
    fn prefix_examples() {
        assert_eq!(select_guard_prefix(&units(&[1.14; 4]), 2.0).unwrap(), 2);
        assert_eq!(select_guard_prefix(&units(&[0.3; 3]), 5.0).unwrap(), 3);
        assert_eq!(select_guard_prefix(&units(&[2.0, 0.1]), 0.0).unwrap(), 1);
        assert_eq!(select_guard_prefix(&[], 1.0), Err(SchedulerError::EmptyUnits));
        // ties are inclusive
        assert_eq!(select_guard_prefix(&units(&[0.5, 0.5, 0.5]), 1.0).unwrap(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.5, 0.0).validate().is_ok());
        let err = cfg(1.5, 0.0).validate().unwrap_err();
        assert_eq!(err.to_string(), "alpha must be in (0,1]");
        assert!(cfg(0.0, 0.0).validate().is_err());
        assert!(cfg(0.5, -0.1).validate().is_err());
        let c = SchedulerConfig {
            pause_threshold: 0.0,
            ..cfg(0.5, 0.0)
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn decision_examples() {
        let c = cfg(0.5, 0.2);
        let refreshed = Continuation::new(1, units(&[1.14; 4])).unwrap();
        let d = decide_handoff(
            HandoffInputs {
                refresh_latency: 0.52,
                guard_time_remaining: 2.28,
                refreshed: Some(&refreshed),
                backup: None,
                consecutive_backups: 0,
                psi: 0.72,
            },
            &c,
        );
        assert_eq!(d, HandoffDecision::Release { k_star: 1 });

        let backup = ActionUnit::primitive(7, 0.5).unwrap();
        let missing = HandoffInputs {
            refresh_latency: 1.0,
            guard_time_remaining: 0.5,
            refreshed: None,
            backup: Some(&backup),
            consecutive_backups: 0,
            psi: 1.0,
        };
        assert_eq!(
            decide_handoff(missing, &c),
            HandoffDecision::Backup {
                unit: backup.clone()
            }
        );
        let exhausted = HandoffInputs {
            consecutive_backups: 1,
            ..missing
        };
        assert_eq!(decide_handoff(exhausted, &c), HandoffDecision::Stop);
        let none = HandoffInputs {
            backup: None,
            ..missing
        };
        assert_eq!(decide_handoff(none, &c), HandoffDecision::Stop);

        // refresh present but late: same fallback ladder
        let late = HandoffInputs {
            refreshed: Some(&refreshed),
            ..missing
        };
        assert!(matches!(decide_handoff(late, &c), HandoffDecision::Backup { .. }));
    }

    proptest! {
        #[test]
        fn prefix_is_minimal(d in prop::collection::vec(0.0f64..3.0, 1..16), psi in 0.0f64..20.0) {
            let k = select_guard_prefix(&units(&d), psi).unwrap();
            prop_assert_eq!(k, brute_force_k(&d, psi));
        }

        #[test]
        fn prefix_monotone_in_budget(d in prop::collection::vec(0.0f64..3.0, 1..16), a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let u = units(&d);
            prop_assert!(select_guard_prefix(&u, lo).unwrap() <= select_guard_prefix(&u, hi).unwrap());
        }

        #[test]
        fn ewma_stays_within_sample_bounds(
            lo in 0.0f64..2.0, span in 0.0f64..2.0, alpha in 0.01f64..=1.0,
            fracs in prop::collection::vec(0.0f64..=1.0, 1..60), init in 0.0f64..=1.0,
        ) {
            let hi = lo + span;
            let c = SchedulerConfig { alpha, initial_estimate: lo + init * span, ..SchedulerConfig::default() };
            let mut est = LatencyEstimator::new(&c);
            prop_assert!(est.estimate >= lo && est.estimate <= hi);
            for f in fracs {
                est = update_estimate(est, lo + f * span, &c).unwrap();
                prop_assert!(est.estimate >= lo && est.estimate <= hi);
            }
        }

        #[test]
        fn ewma_converges_geometrically(c0 in 0.0f64..5.0, start in 0.0f64..5.0, alpha in 0.01f64..=1.0) {
            let c = SchedulerConfig { alpha, ..SchedulerConfig::default() };
            let mut est = LatencyEstimator { estimate: start, samples_seen: 1 };
            for _ in 0..20 {
                let before = (est.estimate - c0).abs();
                est = update_estimate(est, c0, &c).unwrap();
                let after = (est.estimate - c0).abs();
                prop_assert!((after - (1.0 - alpha) * before).abs() <= 1e-12 * (1.0 + before));
            }
        }
    }
}
