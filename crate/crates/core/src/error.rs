use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not place {count} base stations with minimum separation {min_sep_m} m after {retries} attempts")]
    Placement {
        count: usize,
        min_sep_m: f64,
        retries: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dual variable mu[{user}] = {value} is not strictly positive")]
    DualDomain { user: usize, value: f64 },

    #[error("backhaul slack of SBS {sbs} is negative ({slack} Mbit/s); gap bound requires a feasible assignment")]
    InfeasibleForBound { sbs: usize, slack: f64 },

    #[error("user {user} served on SBS {sbs} RB {rb} has zero throughput")]
    StarvedUser { user: usize, sbs: usize, rb: usize },

    #[error("SBS {0} has no RB with positive power to donate")]
    NoDonor(usize),

    #[error("exhaustive search needs {needed} evaluations, limit is {limit}")]
    SearchTooLarge { needed: f64, limit: u64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
