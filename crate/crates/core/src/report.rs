//! CSV/JSON serialisation of [`MetricsReport`]s and cross-policy comparison.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::MetricsReport;

pub const CSV_HEADER: &str = "policy,offered_rps,throughput_rps,mean_latency_ms,p99_latency_ms,req_per_joule,useful_frac,padded_frac,idle_frac,dram_weight_MB_per_req,weight_swaps,energy_J";

/// One output row. Field names are the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ReportRow {
    pub policy: String,
    pub offered_rps: f64,
    pub throughput_rps: f64,
    pub mean_latency_ms: f64,
    pub p99_latency_ms: f64,
    pub req_per_joule: f64,
    pub useful_frac: f64,
    pub padded_frac: f64,
    pub idle_frac: f64,
    pub dram_weight_MB_per_req: f64,
    pub weight_swaps: u64,
    pub energy_J: f64,
}

/// Formats `x` with six significant digits, without exponent and without
/// trailing zeros.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x.is_infinite() {
            format!("{x}")
        } else {
            "0".into()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    let scale = 10f64.powi(mag - 5);
    let rounded = (x / scale).round() * scale;
    // Rounding can carry into a new decade (9.999995 -> 10.0000).
    let mag2 = rounded.abs().log10().floor() as i32;
    let decimals = if mag2 > mag {
        decimals.saturating_sub(1)
    } else {
        decimals
    };
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn round6(x: f64) -> f64 {
    sig6(x).parse().unwrap_or(x)
}

impl ReportRow {
    pub fn from_report(r: &MetricsReport) -> Self {
        ReportRow {
            policy: r.policy.clone(),
            offered_rps: round6(r.offered_load_rps),
            throughput_rps: round6(r.throughput_rps),
            mean_latency_ms: round6(r.mean_latency_s * 1e3),
            p99_latency_ms: round6(r.p99_latency_s * 1e3),
            req_per_joule: round6(r.requests_per_joule),
            useful_frac: round6(r.useful_mac_fraction),
            padded_frac: round6(r.padded_mac_fraction),
            idle_frac: round6(r.idle_fraction),
            dram_weight_MB_per_req: round6(r.dram_weight_bytes_per_request / 1e6),
            weight_swaps: r.weight_swaps,
            energy_J: round6(r.energy_joules),
        }
    }

    fn csv_line(&self) -> String {
        let quoted = if self.policy.contains([',', '"', '\n']) {
            format!("\"{}\"", self.policy.replace('"', "\"\""))
        } else {
            self.policy.clone()
        };
        let nums = [
            self.offered_rps,
            self.throughput_rps,
            self.mean_latency_ms,
            self.p99_latency_ms,
            self.req_per_joule,
            self.useful_frac,
            self.padded_frac,
            self.idle_frac,
            self.dram_weight_MB_per_req,
        ];
        let mut fields = vec![quoted];
        fields.extend(nums.iter().map(|&x| sig6(x)));
        fields.push(self.weight_swaps.to_string());
        fields.push(sig6(self.energy_J));
        fields.join(",")
    }
}

/// Rows sorted by (policy, offered load).
pub fn rows(reports: &[MetricsReport]) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = reports.iter().map(ReportRow::from_report).collect();
    rows.sort_by(|a, b| a.policy.cmp(&b.policy).then(a.offered_rps.total_cmp(&b.offered_rps)));
    rows
}

pub fn to_csv_string(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows(reports) {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

pub fn to_json_string(reports: &[MetricsReport]) -> String {
    let mut s = serde_json::to_string_pretty(&rows(reports)).expect("rows serialise");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_report_csv(reports: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::config("reports", "nothing to write"));
    }
    write_file(path.as_ref(), &to_csv_string(reports))
}

pub fn write_report_json(reports: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::config("reports", "nothing to write"));
    }
    write_file(path.as_ref(), &to_json_string(reports))
}

pub fn parse_report_csv(text: &str) -> std::result::Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_report_csv(&text).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadRatio {
    pub offered_rps: f64,
    pub throughput: f64,
    pub requests_per_joule: f64,
    pub mean_latency: f64,
}

/// Ratios of `b` over `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub ceiling_a_rps: f64,
    pub ceiling_b_rps: f64,
    pub ceiling_ratio: f64,
    pub per_load: Vec<LoadRatio>,
}

fn ceiling(reports: &[&MetricsReport]) -> f64 {
    reports
        .iter()
        .filter(|r| r.sustainable)
        .map(|r| r.offered_load_rps)
        .fold(0.0, f64::max)
}

/// Compares two report sets over the same load grid.
pub fn compare(a: &[MetricsReport], b: &[MetricsReport]) -> Result<Comparison> {
    let mut a: Vec<&MetricsReport> = a.iter().collect();
    let mut b: Vec<&MetricsReport> = b.iter().collect();
    a.sort_by(|x, y| x.offered_load_rps.total_cmp(&y.offered_load_rps));
    b.sort_by(|x, y| x.offered_load_rps.total_cmp(&y.offered_load_rps));
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.offered_load_rps != y.offered_load_rps) {
        return Err(Error::LoadGridMismatch);
    }
    let per_load = a
        .iter()
        .zip(&b)
        .map(|(x, y)| LoadRatio {
            offered_rps: x.offered_load_rps,
            throughput: y.throughput_rps / x.throughput_rps,
            requests_per_joule: y.requests_per_joule / x.requests_per_joule,
            mean_latency: y.mean_latency_s / x.mean_latency_s,
        })
        .collect();
    let (ca, cb) = (ceiling(&a), ceiling(&b));
    Ok(Comparison {
        ceiling_a_rps: ca,
        ceiling_b_rps: cb,
        ceiling_ratio: cb / ca,
        per_load,
    })
}
