use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("operator is not Hermitian (residual {0:e})")]
    NotHermitian(f64),

    #[error("coupling normalization violated: |kappa_f|^2 + |kappa_s|^2 = {0}, expected 1")]
    Normalization(f64),

    #[error("laser amplitude diverges: kappa_f = 0 with nonzero Rabi frequency")]
    DivergentDrive,

    #[error("generator has no designated forward coupling")]
    MissingForwardCoupling,

    #[error("generator has no designated side coupling")]
    MissingSideCoupling,

    #[error("channel index {index} out of range for {count} couplings")]
    InvalidChannel { index: usize, count: usize },

    #[error("generator drive is time dependent; integrate it stepwise")]
    TimeDependent,

    #[error("jump times must be strictly increasing, finite and inside [0, {horizon})")]
    InvalidJumpRecord { horizon: f64 },

    #[error("waiting-time law of later intervals needs a nonzero laser amplitude")]
    ZeroDrive,

    #[error("jump probability per step {0} exceeds the 0.1 accuracy guard")]
    RateTooLarge(f64),

    #[error("record demands a jump at step {step} where the jump rate vanishes")]
    ImpossibleJump { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    #[error("Fock condition n(n+1) = |c|^2 violated (residual {0:e})")]
    FockCondition(f64),

    #[error("mean quasiparticle number must be non-negative, got {0}")]
    NegativeOccupation(f64),

    #[error("squeezed observation requires real c, got imaginary part {0}")]
    ComplexSqueezing(f64),

    #[error("side coupling is neither selfadjoint nor skew-selfadjoint")]
    NotEssentiallyCommutative,

    #[error("numeric guard tripped at step {step}: {reason}")]
    NumericGuard { step: usize, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
