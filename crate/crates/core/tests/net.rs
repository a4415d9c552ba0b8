use std::io::BufWriter;
use std::net::TcpStream;
use std::time::Instant;

use guardrun::net::{run_client_episode, spawn_server, FrameReader, ServerConfig, SleepController, WireMessage};
use guardrun::sim::LatencyModel;
use guardrun::{EndReason, EpisodeConfig, GuardMode, Mode, SchedulerConfig};

fn quick_server(delay: f64, stop_after_round: Option<u64>) -> guardrun::net::ServerHandle {
    let mut cfg = ServerConfig::new(LatencyModel::constant(delay), 4, LatencyModel::constant(0.05));
    cfg.stop_after_round = stop_after_round;
    spawn_server("127.0.0.1:0", cfg).unwrap()
}

#[test]
fn unreachable_server_aborts_without_rounds() {
    // bind then drop to get a port nobody listens on
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let cfg = EpisodeConfig::new(Mode::Live, 5, SchedulerConfig::default());
    let out = run_client_episode(addr, cfg, SleepController);
    assert!(out.report.aborted);
    assert_eq!(out.report.n_round, 0);
    assert!(out.abort_reason.is_some());
}

#[test]
fn server_stop_ends_the_episode() {
    let server = quick_server(0.02, Some(3));
    for mode in [Mode::Blocking, Mode::Live] {
        let cfg = EpisodeConfig::new(mode, 50, SchedulerConfig::default()).with_guard(GuardMode::FixedCount(2));
        let out = run_client_episode(server.local_addr(), cfg, SleepController);
        assert_eq!(out.report.end_reason, EndReason::Stopped, "{mode:?}: {:?}", out.abort_reason);
        assert!(out.report.n_round <= 4, "{mode:?} ran {} rounds", out.report.n_round);
        out.audit.verify().unwrap();
    }
    server.shutdown();
}

#[test]
fn server_holds_each_reply_for_the_injected_delay() {
    let server = quick_server(0.2, None);
    let stream = TcpStream::connect(server.local_addr()).unwrap();
    let mut writer = BufWriter::new(stream.try_clone().unwrap());
    let mut reader = FrameReader::new(stream);
    for round in 0..2 {
        let sent = Instant::now();
        let msg = WireMessage::ObservationMsg {
            round,
            client_send_time: 0.0,
            committed_guard_ids: vec![],
            instruction_id: 0,
        };
        guardrun::net::write_message(&mut writer, &msg).unwrap();
        let reply = reader.read_message().unwrap().unwrap();
        assert!(sent.elapsed().as_secs_f64() >= 0.2);
        match reply {
            WireMessage::ContinuationMsg { round: r, units, .. } => {
                assert_eq!(r, round);
                assert_eq!(units.len(), 4);
            }
            other => panic!("unexpected reply {other:?}"),
        }
    }
    server.shutdown();
}

#[test]
fn live_client_overlaps_refresh_with_execution() {
    let server = quick_server(0.1, None);
    let sched = SchedulerConfig {
        initial_estimate: 0.1,
        ..SchedulerConfig::default()
    };
    let blocking = run_client_episode(
        server.local_addr(),
        EpisodeConfig::new(Mode::Blocking, 6, sched.clone()),
        SleepController,
    );
    let live = run_client_episode(
        server.local_addr(),
        EpisodeConfig::new(Mode::Live, 6, sched).with_guard(GuardMode::FixedCount(3)),
        SleepController,
    );
    server.shutdown();
    assert!(!blocking.report.aborted && !live.report.aborted);
    assert!(live.report.t_wait < blocking.report.t_wait / 2.0);
}
