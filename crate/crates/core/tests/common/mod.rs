#![allow(dead_code)]

use std::path::PathBuf;

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Exhaustive optimum makespan over every assignment of items to lanes.
/// Lanes with equal load are interchangeable, so only one of them is tried.
pub fn optimal_makespan(lengths: &[u32], lanes: usize) -> u64 {
    fn go(i: usize, lengths: &[u32], loads: &mut [u64], best: &mut u64) {
        let current = *loads.iter().max().unwrap();
        if current >= *best {
            return;
        }
        if i == lengths.len() {
            *best = current;
            return;
        }
        let mut seen = Vec::new();
        for l in 0..loads.len() {
            if seen.contains(&loads[l]) {
                continue;
            }
            seen.push(loads[l]);
            loads[l] += lengths[i] as u64;
            go(i + 1, lengths, loads, best);
            loads[l] -= lengths[i] as u64;
        }
    }
    let mut best = u64::MAX;
    go(0, lengths, &mut vec![0; lanes], &mut best);
    best
}
