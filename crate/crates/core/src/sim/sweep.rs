//! Load sweeps and saturation search. Every load point is an independent
//! simulation with its own trace, so points run in parallel; results are
//! returned in load order regardless of completion order.

use rayon::prelude::*;

use super::metrics::MetricsReport;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sched::PolicyConfig;

/// Runs `policy` at each offered load (requests per second).
pub fn saturation_sweep(
    scenario: &Scenario,
    policy: &PolicyConfig,
    loads: &[f64],
) -> Result<Vec<(f64, MetricsReport)>> {
    if loads.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::config("loads", "every load must be a positive number"));
    }
    loads
        .par_iter()
        .map(|&rate| scenario.run_policy(policy, rate).map(|r| (rate, r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Saturation {
    /// Highest offered load found sustainable.
    pub ceiling_rps: f64,
    /// Measured throughput at the ceiling.
    pub throughput_rps: f64,
    /// Every probe as (offered load, sustainable).
    pub probes: Vec<(f64, bool)>,
}

/// Searches `[lo, hi]` for the highest sustainable offered load, to within a
/// relative tolerance. Each round probes three interior points in parallel
/// (geometric spacing), shrinking the bracket four-fold.
pub fn find_saturation(
    scenario: &Scenario,
    policy: &PolicyConfig,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<Saturation> {
    if !(lo > 0.0 && hi > lo && rel_tol > 0.0) {
        return Err(Error::config("saturation", "need 0 < lo < hi and a positive tolerance"));
    }
    let mut probes = Vec::new();
    let base = scenario.run_policy(policy, lo)?;
    probes.push((lo, base.sustainable));
    if !base.sustainable {
        return Ok(Saturation {
            ceiling_rps: 0.0,
            throughput_rps: 0.0,
            probes,
        });
    }
    let top = scenario.run_policy(policy, hi)?;
    probes.push((hi, top.sustainable));
    if top.sustainable {
        return Ok(Saturation {
            ceiling_rps: hi,
            throughput_rps: top.throughput_rps,
            probes,
        });
    }

    let (mut lo, mut hi, mut best) = (lo, hi, base);
    while hi / lo > 1.0 + rel_tol {
        let ratio = (hi / lo).powf(0.25);
        let points = [lo * ratio, lo * ratio * ratio, lo * ratio.powi(3)];
        let results = saturation_sweep(scenario, policy, &points)?;
        let mut new_hi = hi;
        for (rate, report) in results.into_iter() {
            probes.push((rate, report.sustainable));
            if report.sustainable && rate < new_hi {
                if rate > lo {
                    lo = rate;
                    best = report;
                }
            } else if !report.sustainable {
                new_hi = new_hi.min(rate);
            }
        }
        // Non-monotone outcomes (sustainable above an unsustainable point)
        // are resolved conservatively by keeping the lowest failure.
        if lo >= new_hi {
            lo = points
                .iter()
                .copied()
                .filter(|&p| p < new_hi)
                .fold(lo.min(new_hi), f64::max);
        }
        hi = new_hi;
    }
    Ok(Saturation {
        ceiling_rps: lo,
        throughput_rps: best.throughput_rps,
        probes,
    })
}
