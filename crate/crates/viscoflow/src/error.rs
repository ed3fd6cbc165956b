//! Crate-wide error type.

use crate::stokes::StokesReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("point location failed at ({0}, {1}): outside all source triangles")]
    PointLocation(f64, f64),

    #[error("mesh is not conforming: {0}")]
    NotConforming(String),

    #[error("stokes factorization failed: {0}")]
    Factorization(String),

    #[error(
        "stokes solve stalled: |div u| = {:e} > tol {tol:e} after {} outer iterations",
        report.final_div_norm,
        report.outer_iterations
    )]
    StokesStalled { tol: f64, report: StokesReport },

    #[error("conjugate gradient breakdown: nonpositive curvature {0:e} in the Schur complement")]
    CgBreakdown(f64),

    #[error("pointwise prox solve did not converge within {0} iterations")]
    ProxSolve(usize),

    #[error("backtracking exceeded {magnifications} magnifications (L = {lipschitz:e})")]
    BacktrackOverflow { magnifications: usize, lipschitz: f64 },

    #[error("adaptive cycle {cycle} failed to converge after {iterations} iterations")]
    AdaptCycleFailed { cycle: usize, iterations: usize },

    #[error("reference file: {0}")]
    ReferenceFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
