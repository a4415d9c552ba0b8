//! Virtual-clock simulation of navigators, controllers and latency.

pub mod engine;
pub mod latency;
pub mod navigator;
pub mod scenario;

pub use engine::{simulate_episode, simulate_scenario, simulate_scenario_episode, SimLatencies};
pub use latency::{mix_seed, LatencyModel, LatencyStream};
pub use navigator::StubNavigator;
pub use scenario::{parse_scenario, parse_scenario_file, Scenario, ScenarioError};
