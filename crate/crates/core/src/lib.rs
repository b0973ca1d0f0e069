//! Matrix-free randomized trace estimation.
//!
//! Estimators for `tr f(A)` that touch `A` only through block products or
//! entry reads: Hutchinson SLQ, BOLT (block-orthonormal probes with block
//! Lanczos quadrature), Hutch++ and subblock SLQ. On top of these sit
//! Gaussian KL, proxy-KL and Wasserstein-2 estimators, a peeling HODLR
//! builder, Chebyshev localization checks and Wishart rank diagnostics.

pub mod chebyshev;
pub mod divergence;
pub mod error;
pub mod estimators;
pub mod hodlr;
pub mod lanczos;
pub mod linop;
pub mod probes;
pub mod rng;
pub mod spectral;
pub mod wishart;

pub use error::{Result, TraceError};
pub use estimators::{SpectrumSummary, TraceEstimate};
pub use lanczos::JacobiMatrix;
pub use linop::{LinearOperator, OperatorHandle};
pub use probes::{IndexSet, ProbeBlock, ProbeDistribution};
pub use rng::RngStream;
pub use spectral::SpectralFn;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
