//! Simulating the same workload serialized and overlapped, then comparing.

use guardrun::report::compare_runs;
use guardrun::sim::{parse_scenario_file, simulate_scenario};
use guardrun::EpisodeReport;

fn run(name: &str) -> Vec<EpisodeReport> {
    let path = format!("{}/scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    let sc = parse_scenario_file(&path).expect("shipped scenario");
    simulate_scenario(&sc).into_iter().map(|o| o.report).collect()
}

fn main() {
    let blocking = run("navida_native");
    let live = run("navida_live");
    print!("{}", compare_runs(&blocking, &live).to_table());
}
