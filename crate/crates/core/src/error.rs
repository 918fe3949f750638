use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("Laplacian has {0} eigenvalues near zero; graph is not connected")]
    MultipleZeroEigenvalues(usize),

    #[error("pair (A, B) is not controllable (rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },

    #[error("matrix is not Hurwitz (spectral abscissa {0:.3e})")]
    NotHurwitz(f64),

    #[error("ill-conditioned solve, residual {0:.3e}")]
    IllConditioned(f64),

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("Riccati residual too large: {0:.3e}")]
    ResidualTooLarge(f64),

    #[error("value list is empty")]
    EmptyValueList,

    #[error("frozen (X, Y) violate the gain norm bound (min eigenvalue {0:.3e})")]
    FrozenGainViolatesNormBound(f64),

    #[error("SDP solver failure: {0}")]
    SolverFailure(String),

    #[error("no multiplier scaling is feasible at mu = 0")]
    InfeasibleAtInitialization,

    #[error("design problem infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("non-finite state at t = {0}")]
    NonFiniteState(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
