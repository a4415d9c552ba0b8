//! Writing a scenario inline and sweeping its seed.

use guardrun::sim::{parse_scenario, simulate_scenario};

const SCENARIO: &str = r#"
name = "jittery"
mode = "live"
episodes = 5
max_rounds = 40
horizon = 6
stop_after_units = 30

[scheduler]
alpha = 0.3
delta = 0.1
initial_estimate = 0.6

[latency]
compute = { kind = "gaussian", mean = 0.6, stddev = 0.15 }
action_duration = { kind = "uniform", lo = 0.3, hi = 0.6 }
overhead = { kind = "uniform", lo = 0.0, hi = 0.05 }
"#;

fn main() {
    let mut sc = parse_scenario(SCENARIO).expect("valid scenario");
    for seed in 0..3 {
        sc.seed = seed;
        let outs = simulate_scenario(&sc);
        let wait: f64 = outs.iter().map(|o| o.report.t_wait).sum::<f64>() / outs.len() as f64;
        let pauses: f64 = outs.iter().map(|o| o.report.n_pause as f64).sum::<f64>() / outs.len() as f64;
        println!("seed {seed}: mean wait {wait:.2}s, mean pauses {pauses:.1}");
    }
}
