use std::path::PathBuf;

/// Errors produced by data handling, fitting and selection.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "degenerate neighborhood at x0: total kernel weight is {sum_w:e}; increase the bandwidth"
    )]
    DegenerateNeighborhood { sum_w: f64 },

    #[error(
        "penalized system is numerically singular (min eigenvalue {min_eig:e}, max {max_eig:e}); \
         use a larger lambda or a smaller d"
    )]
    RankDeficient { min_eig: f64, max_eig: f64 },

    #[error(
        "predictor noise variance {sigma_nu2} exceeds every eigenvalue of the covariance \
         (largest {max_eig:e}); use a smaller sigma_nu2"
    )]
    NegativeCorrectedCovariance { sigma_nu2: f64, max_eig: f64 },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parameter selection failed at stage `{stage}`: {message}")]
    Selection { stage: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
