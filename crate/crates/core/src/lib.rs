//! Distributed coverage control on the unit interval from noisy density
//! samples.
//!
//! `n` agents on `[0, 1]` each sample a density field at three nearby
//! points per round and move so as to equalize the density-weighted gaps
//! to their neighbours. The crate provides the protocol itself, the exact
//! optimal configuration it converges to, the Lyapunov function used to
//! analyse it, and seeded simulation drivers for convergence experiments.

pub mod density;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod protocol;
pub mod quadrature;
pub mod sim;
pub mod tridiag;

pub use density::{DensityField, Family, Violation};
pub use error::{Error, Result};
pub use metrics::{coverage_phi, coverage_phi_grid, g_hessian_min_eig, grad_q, lyapunov_q, PositionState};
pub use oracle::{
    certify, first_order_residuals, gradient_ratio_check, optimal_phi, optimal_positions, OptimalityReport,
    RatioCheck,
};
pub use protocol::{GradientEstimate, NoiseKind, NoiseModel, Protocol, StepSchedule};
pub use sim::{ensemble, rate_fit, run, theorem_bound, EnsembleCurve, InitSpec, Recording, RunRecord, ScheduleSpec, SimConfig};
