use thiserror::Error;

pub type Result<T> = std::result::Result<T, RcrError>;

#[derive(Debug, Error)]
pub enum RcrError {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("degenerate design: group has no individuals")]
    DegenerateDesign,

    #[error("design mismatch: n1 + n2 = {n1} + {n2} but N = {total}")]
    DesignMismatch { n1: usize, n2: usize, total: usize },

    #[error("data mismatch: {0}")]
    DataMismatch(String),

    #[error("criterion diverges at boundary (w = {0})")]
    BoundaryDivergence(f64),

    #[error("individual index {index} out of range for N = {total}")]
    IndexOutOfRange { index: usize, total: usize },

    #[error("oracle requires positive dispersions ({field} = {value})")]
    OracleDispersion { field: &'static str, value: f64 },

    #[error("singular mixed model equations: {0}")]
    Singular(String),

    #[error("determinant degenerate in fixed-effects limit (u = v = 0)")]
    DeterminantDegenerate,

    #[error("closed form requires equal error variances; use numeric minimizer")]
    ClosedFormUnavailable,

    #[error("malformed observation data: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RcrError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        RcrError::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        match self {
            RcrError::Io(_) => true,
            RcrError::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
