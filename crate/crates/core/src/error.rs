//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measurement schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid outcome value {0}; expected +1 or -1")]
    InvalidOutcome(i8),

    #[error("correlator {0} outside [-1, 1]")]
    CorrelatorOutOfRange(f64),

    #[error("density node at configuration ({x1}, {x2}): |psi|^2 = {density:e} below floor {floor:e}")]
    DensityNode {
        x1: f64,
        x2: f64,
        density: f64,
        floor: f64,
    },

    #[error("non-finite field at t = {t}: norm^2 = {norm_sq}")]
    NonFinite { t: f64, norm_sq: f64 },

    #[error("empty outcome list")]
    EmptyOutcomes,

    #[error("invalid ring: {0}")]
    InvalidRing(String),

    #[error("fast lattice evolution requires a homogeneous lattice: {0}")]
    InhomogeneousFastMode(String),

    #[error("trace timestamps mismatch at index {index}: {left} vs {right}")]
    MismatchedTimestamps { index: usize, left: f64, right: f64 },

    #[error("invalid relaxation parameters: {0}")]
    InvalidRelaxation(String),

    #[error("diffusion step unstable: cell {cell} norm {norm} outside [0.5, 2]")]
    DiffusionUnstable { cell: usize, norm: f64 },

    #[error("decay fit: {0}")]
    DecayFit(String),

    #[error("setting policy: {0}")]
    InvalidPolicy(String),

    #[error("ensemble: {0}")]
    Ensemble(String),

    #[error("setting pair ({0}, {1}) has only {2} unflagged runs; need at least {3}")]
    UndersampledPair(u8, u8, usize, usize),

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("snapshot io: {0}")]
    SnapshotIo(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
