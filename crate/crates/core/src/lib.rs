//! Simulation and error budgets for entangling gates mediated by a thermally
//! populated resonator mode.
//!
//! Units: ħ = k_B = 1 and, unless stated otherwise, ω_c = 1. The joint Hilbert
//! space is always ordered qubit 1 ⊗ … ⊗ qubit N ⊗ resonator.

pub mod config;
pub mod device;
pub mod errorbudget;
pub mod hilbert;
pub mod lindblad;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod output;
pub mod scenarios;
pub mod selftest;

pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for every operator.
pub type Mat = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type Vector = nalgebra::DVector<C64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("cutoff too small: {0}")]
    CutoffTooSmall(String),

    #[error("step instability: {0}")]
    StepInstability(String),

    #[error("diagnostics failure: {0}")]
    Diagnostics(String),

    #[error("mu = {mu} is not commensurate (1/(16 mu^2) must be an integer >= 1); nearest valid mu: {nearest:?}")]
    Commensurability { mu: f64, nearest: Vec<f64> },

    #[error("unsupported coupling pattern: {0}")]
    UnsupportedPattern(String),

    #[error("dimension limit: {0}")]
    DimensionLimit(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("no coefficient table for {0}; run the jitter scenario to obtain one")]
    RequiresSimulation(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CutoffTooSmall(_) | Error::StepInstability(_) | Error::Diagnostics(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
