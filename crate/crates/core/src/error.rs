use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while validating configurations or running scenarios.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its invariant. `field` names the
    /// offending key path (e.g. `policy.batch_size`).
    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("layer index {index} out of range for a {num_layers}-layer model")]
    LayerOutOfRange { index: usize, num_layers: usize },

    #[error("plan references lane {lane} but the accelerator has {num_lanes} lanes")]
    LaneOutOfRange { lane: usize, num_lanes: usize },

    #[error("invalid batch plan: {0}")]
    Plan(String),

    #[error("refill rejected: joins are only allowed while layer 0 executes (current layer {0})")]
    JoinAfterFirstLayer(usize),

    #[error("energy is zero but {0} requests completed; check the energy model")]
    ZeroEnergy(u64),

    #[error("report sets use different load grids")]
    LoadGridMismatch,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors a user fixes by editing the scenario file.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json { .. })
    }
}
