use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("eigensolver failed on block {block}: {reason}")]
    Eigen { block: usize, reason: String },

    #[error("singular saddle-point system for block {block} ({constraints} constraints)")]
    SingularSaddle { block: usize, constraints: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual norm {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("requested rank {requested} exceeds achievable rank {achievable}")]
    RankExceeded { requested: usize, achievable: usize },

    #[error("singular interpolation system: {0}")]
    SingularInterpolation(String),

    #[error("linear solver failure: {0}")]
    Linear(String),

    #[error("reference field has zero norm")]
    ZeroNorm,

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
