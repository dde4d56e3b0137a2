use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("adjacency is not symmetric at ({0}, {1})")]
    AsymmetricAdjacency(usize, usize),
    #[error("negative edge weight at ({0}, {1})")]
    NegativeWeight(usize, usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("spectral map has a pole at eigenvalue {0}")]
    PoleAtEigenvalue(f64),
    #[error("covariance kernel needs at least one historical sample")]
    EmptyHistory,
    #[error("coefficient {0} is negative")]
    NegativeCoefficient(usize),
    #[error("negative temporal coupling {0}")]
    NegativeCoupling(f64),
    #[error("signal has a component outside the kernel range (relative residual {0:.3e})")]
    OutOfRange(f64),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("rank deficient: rank {rank} < {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("parametric basis is empty or its sampled rows are rank deficient")]
    RankDeficientBasis,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },
    #[error("time slot {0} has no observations")]
    EmptySlot(usize),
    #[error("innovation matrix at slot {0} is singular")]
    SingularInnovation(usize),
    #[error("I - A(t,t) is singular")]
    SingularInstantaneous,
    #[error("combined kernel stayed singular along the solver path")]
    SingularCombination,
    #[error("k-means produced an empty cluster on every restart")]
    DisconnectedDegenerate,
    #[error("SNR is undefined for an all-zero signal")]
    UndefinedSnr,
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    /// True for failures caused by the numbers rather than the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PoleAtEigenvalue(_)
                | Error::OutOfRange(_)
                | Error::NotPositiveDefinite(_)
                | Error::RankDeficient { .. }
                | Error::RankDeficientBasis
                | Error::SingularSystem
                | Error::SolverDidNotConverge { .. }
                | Error::SingularInnovation(_)
                | Error::SingularInstantaneous
                | Error::SingularCombination
                | Error::DisconnectedDegenerate
        )
    }
}
