use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Some threshold `w_i` (i < k) is non-positive, so holding only the bond
    /// already completes the schedule with probability 1.
    #[error(
        "trivially satisfiable: threshold w_{index} = {threshold} is not positive; \
         holding only the bond completes the schedule with probability 1"
    )]
    TriviallySatisfiable { index: usize, threshold: f64 },

    #[error("target not achievable: value {value_at_top} at bracket top {bracket_top} is below {target}")]
    NotAchievable {
        target: f64,
        bracket_top: f64,
        value_at_top: f64,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.kind() {
            csv::ErrorKind::Io(_) => match err.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            },
            _ => Error::Format(err.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
