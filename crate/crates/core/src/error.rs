use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An expression node received an argument outside its domain.
    #[error("domain error at `{node}`: invalid argument {value}")]
    Domain { node: String, value: f64 },

    #[error("`{node}` is not differentiable at the requested point")]
    NonDifferentiable { node: String },

    #[error("output {output} is not twice differentiable on the box: {detail}")]
    NotTwiceDifferentiable { output: usize, detail: String },

    #[error("no certified enclosure available on the box: {0}")]
    EnclosureUnavailable(String),

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid hyperrectangle: {0}")]
    InvalidBox(String),

    #[error("cannot split along axis {axis}: {reason}")]
    DegenerateAxis { axis: usize, reason: String },

    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid system definition: {0}")]
    InvalidSystem(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no admissible split axis for output {output}")]
    NoAdmissibleAxis { output: usize },

    #[error("worker panicked while checking {task}: {message}")]
    WorkerPanic { task: String, message: String },

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
