//! A real client and the inference-server stub over loopback TCP.

use guardrun::net::{run_client_episode, spawn_server, ServerConfig, SleepController};
use guardrun::sim::LatencyModel;
use guardrun::{EpisodeConfig, GuardMode, Mode, SchedulerConfig};

fn main() {
    let server = spawn_server(
        "127.0.0.1:0",
        ServerConfig::new(LatencyModel::constant(0.3), 4, LatencyModel::constant(0.2)),
    )
    .expect("bind loopback");
    let sched = SchedulerConfig {
        initial_estimate: 0.3,
        ..SchedulerConfig::default()
    };
    for (label, cfg) in [
        ("blocking", EpisodeConfig::new(Mode::Blocking, 8, sched.clone())),
        ("live", EpisodeConfig::new(Mode::Live, 8, sched.clone()).with_guard(GuardMode::FixedCount(2))),
    ] {
        let r = run_client_episode(server.local_addr(), cfg, SleepController).report;
        println!(
            "{label:>8}: {} rounds, wait {:.2}s of {:.2}s, {} pauses",
            r.n_round, r.t_wait, r.t_episode, r.n_pause
        );
    }
    server.shutdown();
}
