//! Solver library for stationary viscoplastic flow in two-dimensional cavities.
//!
//! The flow problem (Bingham, Casson or Herschel-Bulkley rheology) is posed as a
//! nonsmooth convex minimisation over the velocity and attacked through its dual:
//! a smooth minimisation over admissible stress tensors. Three outer solvers are
//! provided on a P1-iso-P2/P1 finite-element discretisation of the unit square:
//!
//! * [`optim::fista_star`] — accelerated dual proximal gradient method, with
//!   optional gradient-scheme restarting and backtracking line search,
//! * [`optim::ista_star`] — the unaccelerated variant,
//! * [`optim::alg2`] — the augmented-Lagrangian ADMM baseline.
//!
//! Each outer iteration evaluates one pointwise nonlinear map (the dual gradient
//! or a pointwise prox) and solves one Stokes problem by a preconditioned
//! conjugate gradient Uzawa iteration that reuses a sparse Cholesky factorisation
//! of the velocity stiffness block across all iterations.
//!
//! [`adapt`] implements a residual-driven refine/interpolate loop for resolving
//! yield surfaces, [`scenario`] the force-driven and lid-driven cavity setups,
//! and [`output`] the CSV/VTK/reference-file formats used by the CLI.

pub mod adapt;
pub mod app;
pub mod config;
pub mod constitutive;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod optim;
pub mod output;
pub mod scenario;
pub mod stokes;
pub mod transfer;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
