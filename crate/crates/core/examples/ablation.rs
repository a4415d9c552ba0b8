//! Guard sizing and refresh cadence ablations on one workload.

use guardrun::report::summary_table;
use guardrun::sim::{parse_scenario_file, simulate_scenario};

fn main() {
    for name in [
        "navida_native",
        "navida_more_rounds",
        "navida_live",
        "navida_live_fixed",
        "navida_live_no_tail",
    ] {
        let path = format!("{}/scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        let sc = parse_scenario_file(&path).expect("shipped scenario");
        let reports: Vec<_> = simulate_scenario(&sc).into_iter().map(|o| o.report).collect();
        println!("== {name}");
        print!("{}", summary_table(&reports));
    }
}
