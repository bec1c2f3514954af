//! Minimum-action particle flow for linear-Gaussian Bayesian updates.
//!
//! A prior `N(μ0, P0)` is morphed into the posterior of a linear measurement
//! along the log-homotopy `p(x, λ) ∝ g(x)·h(x)^λ`, λ ∈ [0, 1]. Particles are
//! moved deterministically by `dx/dλ = v(x, λ)`. Many velocity fields produce
//! the same density path; this crate provides
//!
//! * the potential (irrotational, minimum kinetic action) flow from a
//!   Lyapunov solve,
//! * the classical exact flow and a rotational variant for comparison,
//! * closed-form kinetic energy and action, continuity and Euler residuals,
//! * ensemble integrators (Euler, RK4, second-order Taylor/Verlet, and a
//!   stiffness-adaptive Euler).
//!
//! ```
//! use varflow::{scenarios, total_action, AffineFlow};
//!
//! let path = scenarios::correlated_2d();
//! let report = total_action(&AffineFlow::potential(&path), 64).unwrap();
//! assert!((report.total_action - 31.72).abs() < 0.02);
//! ```

pub mod convergence;
pub mod diagnostics;
pub mod error;
pub mod flows;
pub mod gauss;
pub mod homotopy;
pub mod particles;
pub mod quadrature;
pub mod scenarios;

pub use convergence::{convergence_study, loglog_slope, ConvergenceRow};
pub use diagnostics::{
    action_decomposition_constant, action_decomposition_constant_for, euler_residual,
    kinetic_energy, master_equation_residual, master_equation_residual_of_field, total_action,
    ActionReport, DEFAULT_QUADRATURE_NODES,
};
pub use error::{Error, Result};
pub use flows::{
    exact_gain_direct, exact_offset, exact_velocity_affine, log_density_gradient, AffineField,
    AffineFlow, Antisymmetric, FlowKind,
};
pub use gauss::{cholesky_sample, solve_lyapunov, spd_inverse, Gaussian, SpdMatrix};
pub use homotopy::{HomotopyPath, LinearMeasurement, PathState};
pub use particles::{
    adaptive_step_controller, empirical_moments, integrate, mean_path_length, EmpiricalMoments,
    IntegratorSpec, Method, ParticleEnsemble, Recording,
};

pub use nalgebra::{DMatrix, DVector};
