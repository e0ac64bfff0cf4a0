use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
///
/// Variant messages are stable; the CLI maps them to exit codes and tests
/// match on the variants.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("degenerate embedding vector at row {row}")]
    DegenerateVector { row: usize },
    #[error("inconsistent episode set: {0}")]
    InconsistentEpisodes(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("constant input: {0}")]
    ConstantInput(String),
    #[error("degenerate normalization range")]
    DegenerateRange,
    #[error("degenerate groups: zero within-group variance")]
    DegenerateGroups,
    #[error("insufficient groups: need at least 2, got {0}")]
    InsufficientGroups(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("metric {metric}: {source}")]
    Metric {
        metric: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("unstable dynamics: spectral radius {0} > 1")]
    UnstableDynamics(f64),
    #[error("context overflow: {len} tokens exceeds limit {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("invalid expectile level {0}; must lie in (0, 1)")]
    InvalidExpectileLevel(f64),
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),
    #[error("no candidates")]
    NoCandidates,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad magic in {}", .0.display())]
    BadMagic(PathBuf),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("version mismatch: file has {found}, reader expects {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("hash mismatch in RND target section")]
    HashMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("write error: {0}")]
    Write(#[source] std::io::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed inputs. The CLI exits with code 2 for these.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalDivergence(_)
            | Error::DegenerateVector { .. }
            | Error::ConstantInput(_)
            | Error::DegenerateGroups
            | Error::DegenerateRange
            | Error::UnstableDynamics(_) => true,
            Error::Metric { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
