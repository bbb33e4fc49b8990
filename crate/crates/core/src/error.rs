use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `row` is the 1-based data row (header excluded).
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("out of support: {0}")]
    OutOfSupport(String),

    #[error("rank-deficient design; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("not enough degrees of freedom: n = {n}, rank = {rank}")]
    DegreesOfFreedom { n: usize, rank: usize },

    #[error("unknown model spec `{0}`; valid specs: t, r, tr, crf2:J=<j>,t_order=<1|2>, crf1long:f_max=<f>,t_max=<t>, crf1short:f=<f>")]
    UnknownSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankDeficient { .. } | Error::DegreesOfFreedom { .. })
    }

    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::UnknownSpec(_))
    }
}
