//! Finite-size secure key rates for the B92 quantum key distribution
//! protocol under collective attacks.
//!
//! The pipeline runs from a qubit channel model to a key rate: the
//! channel acting on half of an entangled pair ([`channel`]), the
//! protocol's measurement and entropy quantities ([`b92`]), the
//! nine-outcome estimation statistics with their KL-divergence
//! confidence region ([`estimation`]), constrained minimization of the
//! adversary's ambiguity over that region ([`optimize`]), and the
//! assembled finite-size rate with its privacy-amplification correction
//! ([`finitekey`]). Dense complex linear algebra lives in [`qmath`].
//!
//! All entropies are in bits. Bloch coordinates are ordered (z, x, y)
//! throughout.

pub mod b92;
pub mod channel;
pub mod estimation;
pub mod finitekey;
pub mod optimize;
pub mod qmath;

pub use b92::{B92Params, SiftPovm};
pub use estimation::{
    ConfidenceRegion, EstimationPovm, OutcomeDistribution, StatisticsMode, TotalWeight,
};
pub use optimize::{ObjectiveReport, OptimizationResult, OptimizerOptions};
pub use channel::{BlochChannel, FreeChannelParams, CP_TOL};
pub use finitekey::{RateNormalization, RateReport, SecurityParams, ASYMPTOTIC_KL_RADIUS};
pub use qmath::{CMatrix, DensityMatrix, Label, PureState};

/// Errors produced anywhere in the rate pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix or state had the wrong dimensions for the operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A matrix required to be Hermitian was not, beyond tolerance.
    #[error("matrix is not Hermitian: max asymmetry {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    /// A matrix failed a density-matrix validity check.
    #[error("not a density matrix: {0}")]
    NotAState(String),
    /// A subsystem label was not present in the state's factor list.
    #[error("unknown subsystem label {0}")]
    UnknownLabel(qmath::Label),
    /// A scalar parameter fell outside its documented domain.
    #[error("{name} = {value} is outside {bounds}")]
    Domain {
        name: &'static str,
        value: f64,
        bounds: &'static str,
    },
    /// The eigensolver did not reach its off-diagonal tolerance.
    #[error("eigensolver failed to converge after {sweeps} sweeps (off-diagonal mass {offdiag:.3e})")]
    EigenConvergence { sweeps: usize, offdiag: f64 },
    /// A channel expected to be completely positive was not.
    #[error("channel is not completely positive (min Choi eigenvalue {min_eigenvalue:.3e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },
    /// The confidence region contained no completely positive channel
    /// reachable by the search.
    #[error("no feasible channel found in the confidence region after {restarts} restarts")]
    InfeasibleRegion { restarts: usize },
    /// The minimizer made no progress across penalty stages.
    #[error("optimizer failed to converge: {0}")]
    OptimizerConvergence(String),
    /// The privacy-amplification block is empty.
    #[error("privacy block is empty (no kept sift events at m = {m})")]
    DegenerateBlock { m: u64 },
    /// The sift probability vanished, so conditional quantities are
    /// undefined.
    #[error("sift statistics are degenerate: {0}")]
    DegenerateSift(String),
}

pub type Result<T> = std::result::Result<T, Error>;
