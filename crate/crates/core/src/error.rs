use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("mark law violates a standing assumption: {0}")]
    AssumptionViolated(String),

    #[error("window [{lo}, {hi}] is empty")]
    EmptyWindow { lo: i64, hi: i64 },

    #[error("window length {len} exceeds memory cap {cap}; raise the cap to at least {len}")]
    WindowTooLarge { len: u64, cap: u64 },

    #[error("window length {len} is shorter than {needed} (ten burn-in lengths)")]
    WindowTooShort { len: u64, needed: u64 },

    #[error("insufficient regenerations: found {found}, need at least {needed}")]
    InsufficientRegenerations { found: usize, needed: usize },

    #[error("left guard violated: node {node} is below the guarded range start {guard}")]
    LeftGuard { node: i64, guard: i64 },

    #[error("right guard violated: orbit of {node} leaves the window (right end {hi}) after {steps} steps")]
    RightGuard { node: i64, hi: i64, steps: usize },

    #[error("node {0} is not labeled successful")]
    NotSuccessful(i64),

    #[error("no eligible atoms for {0}")]
    NoEligibleAtoms(String),

    #[error("core range is empty")]
    EmptyCore,

    #[error("support radius {radius} exceeds the guard band of the core range")]
    RadiusTooLarge { radius: i64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no ephemeral nodes: mean mark is 1 and the ratio identity is degenerate")]
    NoEphemerals,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("export failed: {0}")]
    Export(String),
}

pub type Result<T> = std::result::Result<T, Error>;
