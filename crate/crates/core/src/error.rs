use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("sites {0} and {1} coincide")]
    DuplicateSite(usize, usize),

    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("simulation failed for configuration {config}: {source}")]
    Simulation {
        config: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no observations")]
    EmptyData,

    #[error("{0}")]
    Missing(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("forward cache was produced by different parameters")]
    StaleCache,

    #[error("training loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("model file: {0}")]
    Format(String),

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }
}
