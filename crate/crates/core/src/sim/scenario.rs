use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runtime::{EpisodeConfig, GuardMode, Mode};
use crate::scheduler::SchedulerConfig;

use super::latency::LatencyModel;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn zero() -> LatencyModel {
    LatencyModel::constant(0.0)
}

fn yes() -> bool {
    true
}

fn default_guard() -> GuardMode {
    GuardMode::AdaptiveWallClock
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencySection {
    /// Navigator compute time, `t_send` to `t_recv`.
    pub compute: LatencyModel,
    /// Client-side sensing and encoding before the request leaves.
    #[serde(default = "zero")]
    pub sense: LatencyModel,
    /// Predicted duration per plan position.
    pub action_duration: LatencyModel,
    /// Added to the predicted duration to get the actual one.
    #[serde(default = "zero")]
    pub overhead: LatencyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    #[serde(default)]
    pub seed: u64,
    pub max_rounds: u64,
    pub horizon: usize,
    #[serde(default = "default_guard")]
    pub guard: GuardMode,
    #[serde(default)]
    pub stop_after_units: Option<u64>,
    #[serde(default)]
    pub stop_after_round: Option<u64>,
    #[serde(default)]
    pub refresh_dispatch_delay: f64,
    #[serde(default = "yes")]
    pub send_tail_hint: bool,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    pub latency: LatencySection,
}

fn default_episodes() -> u64 {
    1
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.horizon == 0 {
            return invalid("horizon must be >= 1".into());
        }
        if self.episodes == 0 {
            return invalid("episodes must be >= 1".into());
        }
        for (name, m) in [
            ("compute", &self.latency.compute),
            ("sense", &self.latency.sense),
            ("action_duration", &self.latency.action_duration),
            ("overhead", &self.latency.overhead),
        ] {
            if let Err(e) = m.validate() {
                return invalid(format!("latency.{name}: {e}"));
            }
        }
        self.episode_config()
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            mode: self.mode,
            max_rounds: self.max_rounds,
            guard: self.guard,
            scheduler: self.scheduler.clone(),
            refresh_dispatch_delay: self.refresh_dispatch_delay,
            send_tail_hint: self.send_tail_hint,
            record_trace: true,
            instruction_id: 0,
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = toml::from_str(text)?;
    s.validate()?;
    Ok(s)
}

pub fn parse_scenario_file(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    parse_scenario(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
mode = "live"
max_rounds = 10
horizon = 4
guard = { fixed = 2 }

[scheduler]
alpha = 0.5
delta = 0.0
initial_estimate = 1.0

[latency]
compute = { kind = "constant", value = 0.5 }
action_duration = { kind = "uniform", lo = 0.5, hi = 1.0 }
"#;

    #[test]
    fn parses_minimal() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.guard, GuardMode::FixedCount(2));
        assert_eq!(s.latency.sense, LatencyModel::constant(0.0));
        assert_eq!(s.episodes, 1);
    }

    #[test]
    fn rejects_unknown_key() {
        let bad = MINIMAL.replace("horizon = 4", "horizon = 4\nhorizn = 3");
        assert!(matches!(parse_scenario(&bad), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn rejects_bad_alpha() {
        let bad = MINIMAL.replace("alpha = 0.5", "alpha = 0.0");
        match parse_scenario(&bad) {
            Err(ScenarioError::Invalid(m)) => assert!(m.contains("alpha")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_horizon() {
        let bad = MINIMAL.replace("horizon = 4", "horizon = 0");
        assert!(matches!(parse_scenario(&bad), Err(ScenarioError::Invalid(_))));
    }
}
