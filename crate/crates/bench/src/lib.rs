//! Fixtures shared by the criterion benchmarks.

use rnnserve::{generate_trace, LengthDistribution, Request, TraceConfig};

/// Deterministic request lengths in `1..=max`.
pub fn lengths(n: usize, max: u32) -> Vec<u32> {
    let mut x = 0x9e37_79b9_7f4a_7c15u64;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x % max as u64) as u32 + 1
        })
        .collect()
}

pub fn nmt_trace(rate: f64, duration: f64) -> Vec<Request> {
    generate_trace(&TraceConfig {
        arrival_rate: rate,
        duration,
        length_distribution: LengthDistribution::uniform(5, 120).expect("valid range"),
        seed: 1,
    })
    .expect("valid trace config")
}
