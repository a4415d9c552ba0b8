//! Tracking refresh latency with the running estimate and turning it into a
//! guard budget.

use guardrun::scheduler::{guard_budget, update_estimate};
use guardrun::{LatencyEstimator, SchedulerConfig};

fn main() {
    let cfg = SchedulerConfig {
        alpha: 0.5,
        delta: 0.1,
        initial_estimate: 1.0,
        ..SchedulerConfig::default()
    };
    let mut est = LatencyEstimator::new(&cfg);
    println!("prior: estimate {:.3}s, budget {:.3}s", est.estimate, guard_budget(&est, &cfg));
    for sample in [0.62, 0.58, 0.95, 0.60, 0.61] {
        est = update_estimate(est, sample, &cfg).unwrap();
        println!(
            "measured {sample:.2}s -> estimate {:.3}s, budget {:.3}s",
            est.estimate,
            guard_budget(&est, &cfg)
        );
    }
}
