use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integrator step size {step:e} fell below min_step at t = {t}")]
    StepUnderflow { t: f64, step: f64 },
    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),
    #[error("non-finite state encountered at t = {0}")]
    NonFinite(f64),
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unsupported basis for {0}")]
    UnsupportedBasis(&'static str),
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("germ collision: {0}")]
    GermCollision(String),
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eig:e}, norm {norm:e})")]
    NotPsd { min_eig: f64, norm: f64 },
    #[error("degenerate marginal: {0}")]
    Degenerate(String),
    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

/// Non-fatal numerical conditions raised while fitting or filtering.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Flag {
    RvmNotConverged { iterations: usize },
    RankDeficient { context: String },
    CorrelationJitter,
    CollinearColumns { dropped: Vec<usize> },
    GnmkNotConverged { time: f64, iterations: usize },
    GnmkDiverged { time: f64, iterations: usize },
    SingularUpdate,
    PsdClamped { context: String },
    ReanchorFailed { time: f64, kl: f64 },
}

impl Flag {
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Flag::GnmkNotConverged { .. } | Flag::GnmkDiverged { .. }
        )
    }
}
