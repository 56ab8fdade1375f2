//! Canonical rotation-invariant metrics on the two-sphere.
//!
//! The sphere with its circle action reduces weighted Einstein equations,
//! their energy functionals, a smoothing heat flow, and the holomorphic
//! obstruction invariant to one-dimensional identities in the moment
//! coordinate. This crate implements that reduction on a Chebyshev
//! collocation grid:
//!
//! - [`grid`]: collocation nodes, differentiation, Clenshaw-Curtis
//!   quadrature;
//! - [`geometry`]: momentum profiles, potentials, canonicalization, the
//!   twisted Laplacian;
//! - [`sigma`]: the multiplier weight families with admissibility classes,
//!   normalization and calibration;
//! - [`em_solver`]: obstruction integral, closed-form solution, and the
//!   deformation (continuity) solver with damped Newton steps;
//! - [`functionals`]: the weighted energies I, J, F, their cocycle and
//!   path identities, and the trace monitors;
//! - [`heat_flow`]: the smoothing flow with maximum-principle bound
//!   monitors;
//! - [`invariants`]: the obstruction invariant of Futaki type, the
//!   holomorphy certificate, and the twisted eigenspace;
//! - [`verify`]: the named check battery shared by tests and the CLI.
//!
//! Every type is immutable after construction and every operation is a
//! pure function of its inputs, so values can be shared freely across
//! threads.

#![allow(clippy::needless_range_loop)] // index loops mirror the matrix algebra

pub mod em_solver;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod heat_flow;
pub mod invariants;
pub mod sampling;
pub mod sigma;
pub mod verify;

pub use em_solver::{
    continuity_solve, direct_solve, obstruction, obstruction_on, ContinuityOpts,
    ContinuityOutcome, ContinuityTrace,
};
pub use error::{EmError, Result};
pub use functionals::{f_energy, i_energy, j_energy, FunctionalRecord, PathSpec};
pub use geometry::{
    apply_potential, canonicalize, gradient_norm_sq, hamiltonian_of_potential,
    recover_potential, ricci_potential, round_reference, weighted_laplacian, MetricState,
    Potential, TOTAL_AREA,
};
pub use grid::Grid;
pub use heat_flow::{flow_bound_report, flow_run, smoothing_decay_table, FlowTrace};
pub use invariants::{
    futaki_independence_check, futaki_invariant, holomorphy_certificate, lambda1_eigenspace,
};
pub use sigma::{calibrate, make_sigma, normalize_weight, AdmissibilityClass, SigmaSpec};
