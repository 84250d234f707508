//! Link-level simulator for multiuser MISO downlinks aided by a hybrid
//! transmitting/reflecting active beyond-diagonal RIS.
//!
//! The crate models an `M`-cell surface whose back-to-back element pairs serve
//! users on both sides, with reflection-type amplifiers behind a passive
//! reconfigurable impedance network. It provides:
//!
//! - the scattering-composition and SINR/sum-rate evaluation model
//!   ([`model`]), covering reciprocal and non-reciprocal cell-wise
//!   single/group/fully-connected architectures,
//! - seeded Rician channel generation with 3GPP path loss ([`channels`]),
//! - a block-coordinate-descent solver for joint transmit precoding and
//!   surface design based on fractional programming ([`optimizer`]),
//! - independent reference solvers used to validate every closed-form update
//!   ([`oracle`]),
//! - Monte Carlo sweep drivers with CSV/JSON emission ([`experiments`]),
//! - and the dense complex-matrix utilities the optimizer needs
//!   ([`matrixtools`]).
//!
//! The `bdris` binary exposes `run`, `validate`, and `oracle-check`
//! subcommands on top of [`experiments`].

pub mod channels;
pub mod experiments;
pub mod matrixtools;
pub mod model;
pub mod optimizer;
pub mod oracle;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMat = Array2<Complex64>;
/// Dense complex vector used throughout the crate.
pub type CVec = Array1<Complex64>;

pub use model::{
    Architecture, ChannelSet, Precoder, Reciprocity, RisState, Sector, SystemConfig,
};
pub use optimizer::{bcd_solve, SolveOptions, SolveReport, Solution};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear system is singular within tolerance")]
    SingularSystem,
    #[error("scattering factor {0} is not unitary within tolerance")]
    NotUnitary(&'static str),
    #[error("amplification factors must be positive")]
    NonPositiveAmplification,
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("RIS amplification budget infeasible: residual budget {0:.3e} W")]
    InfeasibleRisBudget(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
