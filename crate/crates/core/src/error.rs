use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown symbol `{name}` at position {pos}")]
    UnknownSymbol { name: String, pos: usize },

    #[error("unknown function `{name}` at position {pos}")]
    UnknownFunction { name: String, pos: usize },

    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: String,
        got: usize,
    },

    #[error("{what} is not finite at {location}")]
    NonFinite { what: String, location: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("problem file line {line}: {msg}")]
    ProblemFile { line: usize, msg: String },

    #[error("field file line {line}: {msg}")]
    FieldFile { line: usize, msg: String },

    #[error("singularity: u + eps = {value:e} <= 0 at node {node}")]
    Singular { node: usize, value: f64 },

    #[error("linear solve failed after {iterations} iterations (residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("eigen iteration failed after {iterations} iterations: {msg}")]
    Eigen { iterations: usize, msg: String },

    #[error("quadrature did not converge: value {value:e}, error estimate {abs_err:e}")]
    Quadrature { value: f64, abs_err: f64 },

    #[error("bracket ordering violated at node {node}: sub {sub:e} > super {sup:e}")]
    BracketViolation { node: usize, sub: f64, sup: f64 },

    #[error("barrier violated at node {node} (r = {r}): u {u:e} > w {w:e}")]
    BarrierViolation { node: usize, r: f64, u: f64, w: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("decay fit refused: {0}")]
    FitRefused(String),

    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            msg: err.to_string(),
        }
    }
}
