//! Cavity flow scenarios: domain, mesh size, rheology, forcing and boundary
//! data, plus the assembled discretisation bundle the solvers run on.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveModel;
use crate::fem::{assemble, load_vector, DirichletSpec, DiscreteOperators};
use crate::mesh::{build_structured_cavity, refine_midpoints, BoundaryTag, CoarseMesh, FineMesh, Point};
use crate::optim::Problem;
use crate::stokes::{factorize, StokesKernel};
use crate::{Error, Result};

/// Net boundary flux beyond this magnitude is incompatible with
/// incompressibility.
pub const FLUX_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ForceDriven,
    LidDriven,
    Custom,
}

/// Body force specification, evaluable at quadrature points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyForce {
    Zero,
    Constant([f64; 2]),
    /// `magnitude * (x2 - c2, c1 - x1)`: rigid swirl about `center`.
    Rotational { magnitude: f64, center: [f64; 2] },
}

impl BodyForce {
    pub fn eval(&self, p: Point) -> [f64; 2] {
        match *self {
            BodyForce::Zero => [0.0, 0.0],
            BodyForce::Constant(f) => f,
            BodyForce::Rotational { magnitude, center } => {
                [magnitude * (p[1] - center[1]), magnitude * (center[0] - p[0])]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BodyForce::Zero)
            || matches!(self, BodyForce::Constant([x, y]) if *x == 0.0 && *y == 0.0)
    }
}

/// Constant velocity per boundary side. Corner vertices belong to two sides;
/// the precedence bottom, left, right, top assigns them to the wall listed
/// first, so the moving lid loses both top corners (the discontinuity is
/// regularised towards the side walls).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryVelocities {
    pub bottom: [f64; 2],
    pub right: [f64; 2],
    pub top: [f64; 2],
    pub left: [f64; 2],
}

impl BoundaryVelocities {
    pub fn lid(speed: f64) -> Self {
        BoundaryVelocities { top: [speed, 0.0], ..Default::default() }
    }

    pub fn value(&self, tag: BoundaryTag) -> [f64; 2] {
        match tag {
            BoundaryTag::Bottom => self.bottom,
            BoundaryTag::Right => self.right,
            BoundaryTag::Top => self.top,
            BoundaryTag::Left => self.left,
        }
    }
}

const TAG_PRECEDENCE: [BoundaryTag; 4] =
    [BoundaryTag::Bottom, BoundaryTag::Left, BoundaryTag::Right, BoundaryTag::Top];

#[derive(Clone, Debug)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Subdivisions per side of the coarse (pressure) grid; h = 1/n.
    pub n: usize,
    pub model: ConstitutiveModel,
    pub body_force: BodyForce,
    pub boundary: BoundaryVelocities,
    /// Path to a stored reference solution for error reporting.
    pub reference: Option<PathBuf>,
}

impl Scenario {
    /// Rotationally forced cavity: `f = 300 (x2 - 1/2, 1/2 - x1)`, rigid
    /// walls, Bi = 10 sqrt(2) unless another model is given.
    pub fn force_driven(model: ConstitutiveModel, n: usize) -> Scenario {
        Scenario {
            kind: ScenarioKind::ForceDriven,
            n,
            model,
            body_force: BodyForce::Rotational { magnitude: 300.0, center: [0.5, 0.5] },
            boundary: BoundaryVelocities::default(),
            reference: None,
        }
    }

    /// Wall-driven cavity: `u = (1, 0)` on the top lid, rigid elsewhere.
    pub fn lid_driven(model: ConstitutiveModel, n: usize) -> Scenario {
        Scenario {
            kind: ScenarioKind::LidDriven,
            n,
            model,
            body_force: BodyForce::Zero,
            boundary: BoundaryVelocities::lid(1.0),
            reference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidScenario("scenario.n: must be at least 1".into()));
        }
        Ok(())
    }

    /// Builds the initial structured mesh pair and assembles everything.
    pub fn discretize(&self) -> Result<Discretization> {
        self.validate()?;
        let coarse = build_structured_cavity(self.n)?;
        self.discretize_coarse(coarse)
    }

    /// Assembles operators on a given coarse mesh (adaptive refinements).
    pub fn discretize_coarse(&self, coarse: CoarseMesh) -> Result<Discretization> {
        let fine = refine_midpoints(&coarse);

        // Sample boundary data at the fine boundary vertices with the corner
        // precedence, then check compatibility with incompressibility.
        let mut tag_of: std::collections::HashMap<usize, BoundaryTag> =
            std::collections::HashMap::new();
        for &(edge, tag) in &fine.boundary_edges {
            for v in edge {
                let slot = tag_of.entry(v).or_insert(tag);
                let rank = |t: BoundaryTag| TAG_PRECEDENCE.iter().position(|&x| x == t).unwrap();
                if rank(tag) < rank(*slot) {
                    *slot = tag;
                }
            }
        }
        let dirichlet = DirichletSpec::on_boundary(&fine, |_| [0.0, 0.0]);
        let values: Vec<[f64; 2]> =
            dirichlet.vertices.iter().map(|v| self.boundary.value(tag_of[v])).collect();
        let dirichlet = DirichletSpec { vertices: dirichlet.vertices, values };

        let flux = boundary_flux(&fine, &dirichlet);
        if flux.abs() > FLUX_TOL {
            return Err(Error::InvalidScenario(format!(
                "boundary_values: net boundary flux {flux:e} violates incompressibility"
            )));
        }

        let ops = Arc::new(assemble(&fine, &coarse, &dirichlet)?);
        let kernel = factorize(&ops)?;
        let load = if self.body_force.is_zero() {
            vec![0.0; ops.n_velocity_dofs]
        } else {
            load_vector(&fine, |p| self.body_force.eval(p))
        };
        Ok(Discretization {
            coarse,
            fine,
            dirichlet_values: ops.dirichlet_values.clone(),
            load,
            kernel,
            ops,
        })
    }
}

/// Net outward flux of the sampled Dirichlet data through the boundary.
pub fn boundary_flux(fine: &FineMesh, dirichlet: &DirichletSpec) -> f64 {
    let value: std::collections::HashMap<usize, [f64; 2]> =
        dirichlet.vertices.iter().copied().zip(dirichlet.values.iter().copied()).collect();
    let mut flux = 0.0;
    for &(edge, tag) in &fine.boundary_edges {
        let (pa, pb) = (fine.vertices[edge[0]], fine.vertices[edge[1]]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let normal = match tag {
            BoundaryTag::Bottom => [0.0, -1.0],
            BoundaryTag::Right => [1.0, 0.0],
            BoundaryTag::Top => [0.0, 1.0],
            BoundaryTag::Left => [-1.0, 0.0],
        };
        let (ua, ub) = (value[&edge[0]], value[&edge[1]]);
        let mean = [(ua[0] + ub[0]) / 2.0, (ua[1] + ub[1]) / 2.0];
        flux += len * (mean[0] * normal[0] + mean[1] * normal[1]);
    }
    flux
}

/// Mesh pair, assembled operators, factorized Stokes kernel and sampled data
/// for one scenario on one mesh.
pub struct Discretization {
    pub coarse: CoarseMesh,
    pub fine: FineMesh,
    pub ops: Arc<DiscreteOperators>,
    pub kernel: StokesKernel,
    pub load: Vec<f64>,
    pub dirichlet_values: Vec<[f64; 2]>,
}

impl Discretization {
    pub fn problem<'a>(
        &'a self,
        model: &'a ConstitutiveModel,
        reference: Option<&'a crate::fem::VelocityField>,
    ) -> Problem<'a> {
        Problem {
            fine: &self.fine,
            ops: &self.ops,
            kernel: &self.kernel,
            model,
            load: &self.load,
            dirichlet_values: &self.dirichlet_values,
            reference,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn force_driven_defaults() {
        let model = ConstitutiveModel::bingham(10.0 * 2.0f64.sqrt()).unwrap();
        assert_relative_eq!(model.bi, 14.142135623730951, max_relative = 1e-15);
        let sc = Scenario::force_driven(model, 32);
        assert_eq!(sc.n, 32);
        let f = sc.body_force.eval([0.25, 0.75]);
        assert_relative_eq!(f[0], 300.0 * 0.25);
        assert_relative_eq!(f[1], 300.0 * 0.25);
        assert!(matches!(sc.boundary, BoundaryVelocities { .. }));
        assert_eq!(sc.boundary.value(BoundaryTag::Top), [0.0, 0.0]);
    }

    #[test]
    fn lid_driven_boundary_sampling() {
        let model = ConstitutiveModel::bingham(20.0).unwrap();
        let sc = Scenario::lid_driven(model, 4);
        let disc = sc.discretize().unwrap();
        // top corners are assigned to the side walls
        for (&v, val) in disc.ops.dirichlet_vertices.iter().zip(&disc.dirichlet_values) {
            let p = disc.fine.vertices[v];
            let on_top = (p[1] - 1.0).abs() <= 1e-12;
            let corner = on_top && (p[0].abs() <= 1e-12 || (p[0] - 1.0).abs() <= 1e-12);
            if corner {
                assert_eq!(*val, [0.0, 0.0]);
            } else if on_top {
                assert_eq!(*val, [1.0, 0.0]);
            } else {
                assert_eq!(*val, [0.0, 0.0]);
            }
        }
        // tangential lid data has zero net flux
        assert!(disc.load.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn incompatible_boundary_flux_is_rejected() {
        let model = ConstitutiveModel::bingham(1.0).unwrap();
        let mut sc = Scenario::lid_driven(model, 2);
        // inflow through the lid with no outflow
        sc.boundary = BoundaryVelocities { top: [0.0, -1.0], ..Default::default() };
        sc.kind = ScenarioKind::Custom;
        match sc.discretize() {
            Err(Error::InvalidScenario(msg)) => assert!(msg.contains("boundary_values")),
            Err(other) => panic!("expected a flux rejection, got {other}"),
            Ok(_) => panic!("incompatible flux was accepted"),
        }
    }

    #[test]
    fn zero_subdivisions_rejected() {
        let model = ConstitutiveModel::bingham(1.0).unwrap();
        let sc = Scenario::force_driven(model, 0);
        assert!(sc.discretize().is_err());
    }
}
