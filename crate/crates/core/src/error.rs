use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no equilibrium root found in the scan bracket")]
    NoEquilibriumInBracket,
    #[error("eigenvalues coincide within tolerance; classification is ambiguous")]
    DegenerateSpectrum,
    #[error("spectrum has no complex-conjugate pair")]
    NoComplexPair,
    #[error("scanned quantity has the same sign at both bracket endpoints")]
    NoSignChange,
    #[error("step size underflow at t = {0}")]
    StepSizeUnderflow(f64),
    #[error("iterates did not converge to an attracting periodic orbit")]
    NotCaptured,
    #[error("only {got} seed trajectories crossed the section (need at least {need})")]
    InsufficientHits { got: usize, need: usize },
    #[error("no section crossing found on either manifold branch")]
    NoCrossing,
    #[error("predicate does not change across the bracket endpoints")]
    PredicateNotBracketed,
    #[error("trajectory projection passes through the rotation axis")]
    ProjectionDegenerate,
    #[error("equilibrium is not a saddle focus")]
    NotSaddleFocus,
    #[error("Newton iteration diverged after {0} steps")]
    NewtonDiverged(usize),
    #[error("finite-difference Jacobian is singular")]
    JacobianSingular,
    #[error("fixed point is not of saddle type")]
    NotASaddle,
    #[error("manifold correction failed at continuation step {0}")]
    CorrectionFailed(usize),
    #[error("no transversal intersection found")]
    NoIntersection,
    #[error("dataset is empty")]
    EmptyDataset,
}
