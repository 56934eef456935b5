use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A covariance matrix (or derived quantity) does not describe a physical state.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("singular parameters: {0}")]
    Singular(String),

    /// Effective NLA parameters violate one of their physicality constraints.
    #[error("unphysical effective parameters: {constraint} (value {value})")]
    Unphysical { constraint: &'static str, value: f64 },

    #[error("quadrature did not converge for {what}: estimated relative error {achieved:.3e} > {requested:.3e}")]
    Convergence {
        what: &'static str,
        achieved: f64,
        requested: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// No positive key rate where one was required.
    #[error("not secure: {0}")]
    NotSecure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Point {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Error {
        Error::Point {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Point { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Domain(_) | Error::Unphysical { .. } | Error::Io(_) => 2,
            Error::Convergence { .. } | Error::InvalidState(_) | Error::Singular(_) => 3,
            _ => 1,
        }
    }
}
