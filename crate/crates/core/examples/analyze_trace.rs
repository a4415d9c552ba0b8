//! Recomputing an episode report offline from its trace log.

use guardrun::sim::{parse_scenario_file, simulate_scenario_episode};
use guardrun::analyze_trace;

fn main() {
    let path = format!("{}/scenarios/navida_live.toml", env!("CARGO_MANIFEST_DIR"));
    let sc = parse_scenario_file(&path).expect("shipped scenario");
    let out = simulate_scenario_episode(&sc, 0);

    let file = std::env::temp_dir().join("guardrun_example_trace.jsonl");
    out.trace.write_to(&file).expect("write trace");
    let report = analyze_trace(&file, sc.scheduler.pause_threshold).expect("read trace");
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    assert_eq!(report.n_pause, out.report.n_pause);
    let _ = std::fs::remove_file(file);
}
