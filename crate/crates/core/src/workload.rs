//! Request traces: Poisson arrivals with time-step counts drawn from a
//! configurable length distribution.
//!
//! A trace is a pure function of its [`TraceConfig`]. The master seed is split
//! into two independent ChaCha streams, one for inter-arrival gaps and one for
//! lengths, so the i-th request has the same length at every arrival rate.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RequestId = u64;

const ARRIVAL_STREAM: u64 = 1;
const LENGTH_STREAM: u64 = 2;

/// Distribution of sequence lengths, in time-steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthDistribution {
    /// Discrete CDF: `(time_steps, cumulative_probability)` pairs.
    Empirical {
        points: Vec<(u32, f64)>,
    },
    Uniform {
        min: u32,
        max: u32,
    },
    Constant {
        value: u32,
    },
}

#[derive(Debug, Deserialize)]
struct CdfRow {
    time_steps: u32,
    cdf: f64,
}

impl LengthDistribution {
    pub fn empirical(points: Vec<(u32, f64)>) -> Result<Self> {
        let dist = LengthDistribution::Empirical { points };
        dist.validate()?;
        Ok(dist)
    }

    pub fn uniform(min: u32, max: u32) -> Result<Self> {
        let dist = LengthDistribution::Uniform { min, max };
        dist.validate()?;
        Ok(dist)
    }

    pub fn constant(value: u32) -> Result<Self> {
        let dist = LengthDistribution::Constant { value };
        dist.validate()?;
        Ok(dist)
    }

    /// Loads an empirical CDF from a CSV file with header `time_steps,cdf`.
    pub fn from_cdf_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = reader.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_steps", "cdf"] {
            return Err(Error::config(
                "workload.length_distribution.cdf_file",
                format!("{}: expected header `time_steps,cdf`", path.display()),
            ));
        }
        let mut points = Vec::new();
        for row in reader.deserialize() {
            let row: CdfRow = row.map_err(csv_err)?;
            points.push((row.time_steps, row.cdf));
        }
        Self::empirical(points)
    }

    pub fn validate(&self) -> Result<()> {
        const FIELD: &str = "workload.length_distribution";
        match self {
            LengthDistribution::Empirical { points } => {
                if points.is_empty() {
                    return Err(Error::config(FIELD, "empirical CDF has no entries"));
                }
                let mut prev: Option<(u32, f64)> = None;
                for &(steps, p) in points {
                    if steps == 0 {
                        return Err(Error::config(FIELD, "time-step values must be >= 1"));
                    }
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::config(
                            FIELD,
                            format!("cumulative probability {p} outside (0, 1]"),
                        ));
                    }
                    if let Some((prev_steps, prev_p)) = prev {
                        if steps <= prev_steps {
                            return Err(Error::config(FIELD, "time_steps must be strictly ascending"));
                        }
                        if p <= prev_p {
                            return Err(Error::config(FIELD, "CDF must be strictly increasing"));
                        }
                    }
                    prev = Some((steps, p));
                }
                if points.last().map(|&(_, p)| p) != Some(1.0) {
                    return Err(Error::config(FIELD, "CDF must end at exactly 1.0"));
                }
            }
            LengthDistribution::Uniform { min, max } => {
                if *min == 0 || min > max {
                    return Err(Error::config(FIELD, "uniform bounds need 1 <= min <= max"));
                }
            }
            LengthDistribution::Constant { value } => {
                if *value == 0 {
                    return Err(Error::config(FIELD, "constant length must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Maps a uniform draw in `[0, 1)` to a length. For the empirical kind this
    /// is the first entry whose cumulative probability is `>= u`.
    pub fn quantile(&self, u: f64) -> u32 {
        match self {
            LengthDistribution::Empirical { points } => {
                let idx = points.partition_point(|&(_, p)| p < u);
                points[idx.min(points.len() - 1)].0
            }
            LengthDistribution::Uniform { min, max } => {
                let span = (*max - *min + 1) as f64;
                (*min + (u * span) as u32).min(*max)
            }
            LengthDistribution::Constant { value } => *value,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.quantile(rng.random::<f64>())
    }

    pub fn mean(&self) -> f64 {
        match self {
            LengthDistribution::Empirical { points } => {
                let mut prev = 0.0;
                points
                    .iter()
                    .map(|&(steps, p)| {
                        let mass = p - prev;
                        prev = p;
                        steps as f64 * mass
                    })
                    .sum()
            }
            LengthDistribution::Uniform { min, max } => (*min as f64 + *max as f64) / 2.0,
            LengthDistribution::Constant { value } => *value as f64,
        }
    }

    pub fn max_value(&self) -> u32 {
        match self {
            LengthDistribution::Empirical { points } => points.last().map_or(0, |p| p.0),
            LengthDistribution::Uniform { max, .. } => *max,
            LengthDistribution::Constant { value } => *value,
        }
    }

    /// Probability mass per support value, in ascending order.
    pub fn pmf(&self) -> Vec<(u32, f64)> {
        match self {
            LengthDistribution::Empirical { points } => {
                let mut prev = 0.0;
                points
                    .iter()
                    .map(|&(steps, p)| {
                        let mass = p - prev;
                        prev = p;
                        (steps, mass)
                    })
                    .collect()
            }
            LengthDistribution::Uniform { min, max } => {
                let n = (*max - *min + 1) as f64;
                (*min..=*max).map(|v| (v, 1.0 / n)).collect()
            }
            LengthDistribution::Constant { value } => vec![(*value, 1.0)],
        }
    }
}

/// Free function form used by callers that hold the distribution by value.
pub fn sample_length<R: Rng + ?Sized>(dist: &LengthDistribution, rng: &mut R) -> u32 {
    dist.sample(rng)
}

/// One inference job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    /// Simulated seconds.
    pub arrival_time: f64,
    pub total_time_steps: u32,
    pub model_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    /// Requests per second.
    pub arrival_rate: f64,
    /// Simulated seconds. Arrivals at or after this instant are dropped.
    pub duration: f64,
    pub length_distribution: LengthDistribution,
    pub seed: u64,
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::config("workload.arrival_rate", "must be a positive number"));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::config("sim.duration", "must be a non-negative number"));
        }
        self.length_distribution.validate()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn generate_trace(config: &TraceConfig) -> Result<Vec<Request>> {
    config.validate()?;
    let gaps = Exp::new(config.arrival_rate).map_err(|e| Error::config("workload.arrival_rate", e.to_string()))?;
    let mut arrival_rng = stream(config.seed, ARRIVAL_STREAM);
    let mut length_rng = stream(config.seed, LENGTH_STREAM);

    let mut trace = Vec::with_capacity((config.arrival_rate * config.duration * 1.01) as usize + 16);
    let mut now = 0.0;
    loop {
        now += gaps.sample(&mut arrival_rng);
        if now >= config.duration {
            break;
        }
        trace.push(Request {
            id: trace.len() as RequestId,
            arrival_time: now,
            total_time_steps: config.length_distribution.sample(&mut length_rng),
            model_id: 0,
        });
    }
    Ok(trace)
}

/// Writes `id,arrival_time,time_steps` rows.
pub fn write_trace_csv(trace: &[Request], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    writeln!(out, "id,arrival_time,time_steps").map_err(io_err)?;
    for r in trace {
        writeln!(out, "{},{:.9},{}", r.id, r.arrival_time, r.total_time_steps).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
