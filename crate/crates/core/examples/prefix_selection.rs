//! Sizing a guard: the shortest prefix whose predicted duration covers the
//! guard budget.

use guardrun::action::predicted_prefix_time;
use guardrun::scheduler::select_guard_prefix;
use guardrun::ActionUnit;

fn main() {
    let units: Vec<ActionUnit> = [0.4, 0.7, 0.5, 0.6]
        .iter()
        .enumerate()
        .map(|(i, &d)| ActionUnit::primitive(i as u64 + 1, d).unwrap())
        .collect();
    for psi in [0.0, 0.4, 0.9, 1.1, 1.6, 5.0] {
        let k = select_guard_prefix(&units, psi).unwrap();
        let covered = predicted_prefix_time(&units, k).unwrap();
        println!("budget {psi:>4.1}s -> guard of {k} unit(s), {covered:.1}s of motion");
    }
}
