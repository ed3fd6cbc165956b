//! Finite-element spaces and operators for the P1-iso-P2/P1 pairing.
//!
//! Velocity is continuous piecewise-linear (vector) on the fine mesh, pressure
//! continuous piecewise-linear on the coarse mesh, and strain-rate/stress
//! tensors piecewise constant per fine element, stored as the three components
//! `(t11, t22, t12)`. All inner products weight the off-diagonal component
//! twice so that the stored triple behaves like a symmetric 2x2 tensor under
//! the Frobenius metric. Element integrals are closed-form (edge-midpoint
//! quadrature, exact for quadratics); no quadrature error budget exists for
//! the polynomial degrees present.

use crate::mesh::{signed_area, CoarseMesh, FineMesh, Point};
use crate::{Error, Result};

/// Nodal P1 vector field on the fine mesh, interleaved `[ux0, uy0, ux1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub values: Vec<f64>,
    stamp: u64,
}

/// Nodal P1 scalar field on the coarse mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureField {
    pub values: Vec<f64>,
    stamp: u64,
}

/// Piecewise-constant symmetric tensor field on the fine mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    /// Per element: `[t11, t22, t12]`.
    pub components: Vec<[f64; 3]>,
    stamp: u64,
}

impl VelocityField {
    pub fn zeros(fine: &FineMesh) -> Self {
        VelocityField { values: vec![0.0; 2 * fine.n_vertices()], stamp: fine.stamp() }
    }

    /// Interpolates a continuous vector function at the fine vertices.
    pub fn interpolate(fine: &FineMesh, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let mut values = Vec::with_capacity(2 * fine.n_vertices());
        for &p in &fine.vertices {
            let v = f(p);
            values.push(v[0]);
            values.push(v[1]);
        }
        VelocityField { values, stamp: fine.stamp() }
    }

    pub(crate) fn from_values(values: Vec<f64>, stamp: u64) -> Self {
        VelocityField { values, stamp }
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn at(&self, vertex: usize) -> [f64; 2] {
        [self.values[2 * vertex], self.values[2 * vertex + 1]]
    }
}

impl PressureField {
    pub fn zeros(coarse: &CoarseMesh) -> Self {
        PressureField { values: vec![0.0; coarse.n_vertices()], stamp: coarse.stamp() }
    }

    pub(crate) fn from_values(values: Vec<f64>, stamp: u64) -> Self {
        PressureField { values, stamp }
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }
}

impl TensorField {
    pub fn zeros(fine: &FineMesh) -> Self {
        TensorField { components: vec![[0.0; 3]; fine.n_triangles()], stamp: fine.stamp() }
    }

    pub fn constant(fine: &FineMesh, value: [f64; 3]) -> Self {
        TensorField { components: vec![value; fine.n_triangles()], stamp: fine.stamp() }
    }

    pub(crate) fn from_components(components: Vec<[f64; 3]>, stamp: u64) -> Self {
        TensorField { components, stamp }
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Pointwise Frobenius magnitude `sqrt(t11^2 + t22^2 + 2 t12^2)`.
    pub fn magnitude(&self, element: usize) -> f64 {
        let [a, b, c] = self.components[element];
        (a * a + b * b + 2.0 * c * c).sqrt()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.len()).map(|e| self.magnitude(e)).collect()
    }

    /// Linear combination `ca * a + cb * b`.
    pub fn lin_comb(ca: f64, a: &TensorField, cb: f64, b: &TensorField) -> TensorField {
        assert_eq!(a.stamp, b.stamp, "tensor fields live on different meshes");
        let components = a
            .components
            .iter()
            .zip(&b.components)
            .map(|(x, y)| [ca * x[0] + cb * y[0], ca * x[1] + cb * y[1], ca * x[2] + cb * y[2]])
            .collect();
        TensorField { components, stamp: a.stamp }
    }

    pub fn map(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> TensorField {
        TensorField { components: self.components.iter().map(|&c| f(c)).collect(), stamp: self.stamp }
    }
}

fn check_fine(fine: &FineMesh, stamp: u64, what: &str) -> Result<()> {
    if fine.stamp() != stamp {
        return Err(Error::MeshMismatch(format!("{what} does not live on the given fine mesh")));
    }
    Ok(())
}

/// Weighted Frobenius inner product `sum_e area_e (a11 b11 + a22 b22 + 2 a12 b12)`.
pub fn inner_q(fine: &FineMesh, a: &TensorField, b: &TensorField) -> Result<f64> {
    check_fine(fine, a.stamp, "tensor field")?;
    check_fine(fine, b.stamp, "tensor field")?;
    let mut acc = 0.0;
    for (e, (x, y)) in a.components.iter().zip(&b.components).enumerate() {
        acc += fine.triangle_area(e) * (x[0] * y[0] + x[1] * y[1] + 2.0 * x[2] * y[2]);
    }
    Ok(acc)
}

/// `L^r` norm of a tensor field with the weighted Frobenius pointwise norm.
pub fn norm_q(fine: &FineMesh, a: &TensorField, r: f64) -> Result<f64> {
    check_fine(fine, a.stamp, "tensor field")?;
    debug_assert!(r >= 1.0);
    let mut acc = 0.0;
    for e in 0..a.len() {
        acc += fine.triangle_area(e) * a.magnitude(e).powf(r);
    }
    Ok(acc.powf(1.0 / r))
}

/// Full `W^{1,r}` norm of the difference of two velocity fields:
/// `(||u - v||_{L^r}^r + ||grad(u - v)||_{L^r}^r)^{1/r}`.
///
/// The gradient term uses the full (not symmetrised) gradient, constant per
/// element; the `L^r` term uses edge-midpoint quadrature.
pub fn error_norm_u(fine: &FineMesh, u: &VelocityField, reference: &VelocityField, r: f64) -> Result<f64> {
    check_fine(fine, u.stamp, "velocity field")?;
    check_fine(fine, reference.stamp, "reference velocity field")?;
    let d: Vec<f64> = u.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect();
    let mut acc = 0.0;
    for tri in fine.triangles.iter() {
        let (grads, area) = p1_gradients(&fine.vertices, *tri);
        // full gradient G[c][d] = d_d (u_c)
        let mut g = [[0.0f64; 2]; 2];
        for (k, &v) in tri.iter().enumerate() {
            for c in 0..2 {
                for dir in 0..2 {
                    g[c][dir] += grads[k][dir] * d[2 * v + c];
                }
            }
        }
        let gnorm2 = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1];
        acc += area * gnorm2.sqrt().powf(r);
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let vx = 0.5 * (d[2 * tri[i]] + d[2 * tri[j]]);
            let vy = 0.5 * (d[2 * tri[i] + 1] + d[2 * tri[j] + 1]);
            acc += area / 3.0 * (vx * vx + vy * vy).sqrt().powf(r);
        }
    }
    Ok(acc.powf(1.0 / r))
}

/// Assembles the body-force load vector by edge-midpoint quadrature
/// (exact for linear forces against P1 test functions).
pub fn load_vector(fine: &FineMesh, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
    let mut load = vec![0.0; 2 * fine.n_vertices()];
    for tri in &fine.triangles {
        let (_, area) = p1_gradients(&fine.vertices, *tri);
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let (pi, pj) = (fine.vertices[tri[i]], fine.vertices[tri[j]]);
            let fm = f([(pi[0] + pj[0]) / 2.0, (pi[1] + pj[1]) / 2.0]);
            for (v, comp) in [(tri[i], fm), (tri[j], fm)] {
                load[2 * v] += area / 6.0 * comp[0];
                load[2 * v + 1] += area / 6.0 * comp[1];
            }
        }
    }
    load
}

/// Gradients of the three local P1 basis functions and the triangle area.
fn p1_gradients(vertices: &[Point], tri: [usize; 3]) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = tri.map(|v| vertices[v]);
    let area = signed_area(a, b, c);
    let s = 1.0 / (2.0 * area);
    let grads = [
        [(b[1] - c[1]) * s, (c[0] - b[0]) * s],
        [(c[1] - a[1]) * s, (a[0] - c[0]) * s],
        [(a[1] - b[1]) * s, (b[0] - a[0]) * s],
    ];
    (grads, area)
}

#[derive(Clone, Debug)]
struct Elem {
    verts: [usize; 3],
    grads: [[f64; 2]; 3],
    area: f64,
    /// Coarse vertices of the parent triangle.
    pverts: [usize; 3],
    /// `int_e psi_q` for each parent coarse vertex q.
    pweights: [f64; 3],
}

/// Assembled discrete operators for one coarse/fine mesh pair.
///
/// `D` (symmetric gradient), `B` (pressure-velocity coupling, with the sign
/// convention `(B u)_q = -int psi_q div u`) and the mass weights are stored
/// element-wise and applied in fixed element order, so all products are
/// deterministic.
pub struct DiscreteOperators {
    elems: Vec<Elem>,
    pub areas: Vec<f64>,
    pub n_velocity_dofs: usize,
    pub n_pressure_dofs: usize,
    /// Constrained fine vertices, ascending.
    pub dirichlet_vertices: Vec<usize>,
    /// Default boundary values aligned with `dirichlet_vertices`.
    pub dirichlet_values: Vec<[f64; 2]>,
    /// Per velocity DOF: position in the free-DOF numbering, or `usize::MAX`.
    pub free_index: Vec<usize>,
    /// Free velocity DOFs, ascending.
    pub free_dofs: Vec<usize>,
    /// `int psi_q` per coarse vertex (lumped pressure weights; sums to 1).
    pub pressure_weights: Vec<f64>,
    /// Coarse P1 pressure mass matrix, sorted merged triplets.
    pub pressure_mass: Vec<(usize, usize, f64)>,
    coarse_triangles: Vec<[usize; 3]>,
    coarse_areas: Vec<f64>,
    fine_stamp: u64,
    coarse_stamp: u64,
}

impl DiscreteOperators {
    pub fn fine_stamp(&self) -> u64 {
        self.fine_stamp
    }

    pub fn coarse_stamp(&self) -> u64 {
        self.coarse_stamp
    }

    pub fn n_free_dofs(&self) -> usize {
        self.free_dofs.len()
    }

    /// Symmetric gradient of a velocity field, per fine element.
    pub fn apply_d(&self, u: &VelocityField) -> TensorField {
        debug_assert_eq!(u.stamp, self.fine_stamp);
        let comps = self
            .elems
            .iter()
            .map(|e| {
                let mut t = [0.0f64; 3];
                for (k, &v) in e.verts.iter().enumerate() {
                    let (ux, uy) = (u.values[2 * v], u.values[2 * v + 1]);
                    let [gx, gy] = e.grads[k];
                    t[0] += gx * ux;
                    t[1] += gy * uy;
                    t[2] += 0.5 * (gy * ux + gx * uy);
                }
                t
            })
            .collect();
        TensorField { components: comps, stamp: self.fine_stamp }
    }

    /// `D^T M_q t`: the load induced by a tensor field on the velocity space,
    /// i.e. the coefficients of `v -> <t, D v>_Q`.
    pub fn apply_dt_mq(&self, t: &TensorField) -> Vec<f64> {
        debug_assert_eq!(t.stamp, self.fine_stamp);
        let mut out = vec![0.0; self.n_velocity_dofs];
        for (e, comp) in self.elems.iter().zip(&t.components) {
            let a = e.area;
            for (k, &v) in e.verts.iter().enumerate() {
                let [gx, gy] = e.grads[k];
                out[2 * v] += a * (comp[0] * gx + comp[2] * gy);
                out[2 * v + 1] += a * (comp[1] * gy + comp[2] * gx);
            }
        }
        out
    }

    /// Stiffness application `K u = D^T M_q D u` on raw coefficient vectors.
    pub fn apply_k(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity_dofs];
        for e in &self.elems {
            let mut t = [0.0f64; 3];
            for (k, &v) in e.verts.iter().enumerate() {
                let [gx, gy] = e.grads[k];
                t[0] += gx * u[2 * v];
                t[1] += gy * u[2 * v + 1];
                t[2] += 0.5 * (gy * u[2 * v] + gx * u[2 * v + 1]);
            }
            for (k, &v) in e.verts.iter().enumerate() {
                let [gx, gy] = e.grads[k];
                out[2 * v] += e.area * (t[0] * gx + t[2] * gy);
                out[2 * v + 1] += e.area * (t[1] * gy + t[2] * gx);
            }
        }
        out
    }

    /// Divergence of a velocity coefficient vector, per fine element.
    pub fn div_per_element(&self, u: &[f64]) -> Vec<f64> {
        self.elems
            .iter()
            .map(|e| {
                let mut d = 0.0;
                for (k, &v) in e.verts.iter().enumerate() {
                    d += e.grads[k][0] * u[2 * v] + e.grads[k][1] * u[2 * v + 1];
                }
                d
            })
            .collect()
    }

    /// `(B u)_q = -int psi_q div u` over all coarse pressure DOFs.
    pub fn apply_b(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_pressure_dofs];
        for e in &self.elems {
            let mut d = 0.0;
            for (k, &v) in e.verts.iter().enumerate() {
                d += e.grads[k][0] * u[2 * v] + e.grads[k][1] * u[2 * v + 1];
            }
            for q in 0..3 {
                out[e.pverts[q]] -= e.pweights[q] * d;
            }
        }
        out
    }

    /// `B^T p`: discrete pressure gradient on the velocity space.
    pub fn apply_bt(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity_dofs];
        for e in &self.elems {
            let pe: f64 = (0..3).map(|q| p[e.pverts[q]] * e.pweights[q]).sum();
            for (k, &v) in e.verts.iter().enumerate() {
                out[2 * v] -= e.grads[k][0] * pe;
                out[2 * v + 1] -= e.grads[k][1] * pe;
            }
        }
        out
    }

    /// `int p` over the domain.
    pub fn pressure_integral(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.pressure_weights).map(|(v, w)| v * w).sum()
    }

    /// `L^r` norm of a coarse P1 scalar field (edge-midpoint quadrature,
    /// exact for `r = 2`).
    pub fn pressure_lr_norm(&self, values: &[f64], r: f64) -> f64 {
        let mut acc = 0.0;
        for (tri, &area) in self.coarse_triangles.iter().zip(&self.coarse_areas) {
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                let mid = 0.5 * (values[tri[i]] + values[tri[j]]);
                acc += area / 3.0 * mid.abs().powf(r);
            }
        }
        acc.powf(1.0 / r)
    }

    /// Subtracts the mean so that `int p = 0` (the domain has unit area).
    pub fn project_zero_mean(&self, p: &mut [f64]) {
        let mean = self.pressure_integral(p);
        for v in p.iter_mut() {
            *v -= mean;
        }
    }

    /// Stiffness triplets on free DOFs only (Dirichlet rows/columns removed),
    /// sorted and merged, ready for factorization.
    pub fn kff_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for e in &self.elems {
            // local 3x6 symmetric-gradient matrix rows (t11, t22, t12)
            let mut b = [[0.0f64; 6]; 3];
            for k in 0..3 {
                let [gx, gy] = e.grads[k];
                b[0][2 * k] = gx;
                b[1][2 * k + 1] = gy;
                b[2][2 * k] = 0.5 * gy;
                b[2][2 * k + 1] = 0.5 * gx;
            }
            let w = [e.area, e.area, 2.0 * e.area];
            for i in 0..6 {
                let gi = 2 * e.verts[i / 2] + i % 2;
                let fi = self.free_index[gi];
                if fi == usize::MAX {
                    continue;
                }
                for j in 0..6 {
                    let gj = 2 * e.verts[j / 2] + j % 2;
                    let fj = self.free_index[gj];
                    if fj == usize::MAX {
                        continue;
                    }
                    let val: f64 = (0..3).map(|c| w[c] * b[c][i] * b[c][j]).sum();
                    if val != 0.0 {
                        trip.push((fi, fj, val));
                    }
                }
            }
        }
        merge_triplets(trip)
    }

}

/// Stable sort + sequential merge keeps duplicate accumulation deterministic.
fn merge_triplets(mut trip: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    trip.sort_by_key(|&(i, j, _)| (j, i));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(trip.len() / 4);
    for (i, j, v) in trip {
        match out.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => out.push((i, j, v)),
        }
    }
    out
}

/// Dirichlet data: constrained fine vertices with prescribed velocities.
#[derive(Clone, Debug, Default)]
pub struct DirichletSpec {
    pub vertices: Vec<usize>,
    pub values: Vec<[f64; 2]>,
}

impl DirichletSpec {
    /// Constrains every boundary vertex of the fine mesh with values sampled
    /// from `g`.
    pub fn on_boundary(fine: &FineMesh, g: impl Fn(Point) -> [f64; 2]) -> Self {
        let vertices = fine.boundary_vertices();
        let values = vertices.iter().map(|&v| g(fine.vertices[v])).collect();
        DirichletSpec { vertices, values }
    }

    pub fn homogeneous(fine: &FineMesh) -> Self {
        Self::on_boundary(fine, |_| [0.0, 0.0])
    }
}

/// Assembles all discrete operators for a conforming coarse/fine pair.
pub fn assemble(fine: &FineMesh, coarse: &CoarseMesh, dirichlet: &DirichletSpec) -> Result<DiscreteOperators> {
    if fine.coarse_stamp() != coarse.stamp() {
        return Err(Error::MeshMismatch(
            "fine mesh is not the midpoint refinement of the given coarse mesh".into(),
        ));
    }
    let mut elems = Vec::with_capacity(fine.n_triangles());
    for (t, tri) in fine.triangles.iter().enumerate() {
        let (grads, area) = p1_gradients(&fine.vertices, *tri);
        let parent = fine.parent[t];
        let pverts = coarse.triangles[parent];
        let [pa, pb, pc] = pverts.map(|v| coarse.vertices[v]);
        let parent_area = signed_area(pa, pb, pc);
        // int_e psi_q: psi_q is linear on e, so the vertex-average rule is exact.
        let mut pweights = [0.0f64; 3];
        for &v in tri {
            let p = fine.vertices[v];
            let la = signed_area(p, pb, pc) / parent_area;
            let lb = signed_area(pa, p, pc) / parent_area;
            let lc = 1.0 - la - lb;
            pweights[0] += la * area / 3.0;
            pweights[1] += lb * area / 3.0;
            pweights[2] += lc * area / 3.0;
        }
        elems.push(Elem { verts: *tri, grads, area, pverts, pweights });
    }

    let n_velocity_dofs = 2 * fine.n_vertices();
    let mut constrained = vec![false; n_velocity_dofs];
    for &v in &dirichlet.vertices {
        constrained[2 * v] = true;
        constrained[2 * v + 1] = true;
    }
    let mut free_index = vec![usize::MAX; n_velocity_dofs];
    let mut free_dofs = Vec::new();
    for (dof, &c) in constrained.iter().enumerate() {
        if !c {
            free_index[dof] = free_dofs.len();
            free_dofs.push(dof);
        }
    }

    let mut pressure_weights = vec![0.0; coarse.n_vertices()];
    let mut mass_trip = Vec::with_capacity(9 * coarse.n_triangles());
    for t in 0..coarse.n_triangles() {
        let area = coarse.triangle_area(t);
        let verts = coarse.triangles[t];
        for &v in &verts {
            pressure_weights[v] += area / 3.0;
        }
        for i in 0..3 {
            for j in 0..3 {
                let val = if i == j { area / 6.0 } else { area / 12.0 };
                mass_trip.push((verts[i], verts[j], val));
            }
        }
    }

    let areas = elems.iter().map(|e| e.area).collect();
    Ok(DiscreteOperators {
        elems,
        areas,
        n_velocity_dofs,
        n_pressure_dofs: coarse.n_vertices(),
        dirichlet_vertices: dirichlet.vertices.clone(),
        dirichlet_values: dirichlet.values.clone(),
        free_index,
        free_dofs,
        pressure_weights,
        pressure_mass: merge_triplets(mass_trip),
        coarse_triangles: coarse.triangles.clone(),
        coarse_areas: (0..coarse.n_triangles()).map(|t| coarse.triangle_area(t)).collect(),
        fine_stamp: fine.stamp(),
        coarse_stamp: coarse.stamp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_cavity, refine_midpoints};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn pair(n: usize) -> (CoarseMesh, FineMesh) {
        let coarse = build_structured_cavity(n).unwrap();
        let fine = refine_midpoints(&coarse);
        (coarse, fine)
    }

    fn ops(n: usize) -> (CoarseMesh, FineMesh, DiscreteOperators) {
        let (coarse, fine) = pair(n);
        let d = DirichletSpec::homogeneous(&fine);
        let o = assemble(&fine, &coarse, &d).unwrap();
        (coarse, fine, o)
    }

    #[test]
    fn symmetric_gradient_of_linear_fields() {
        let (_, fine, o) = ops(3);
        let u = VelocityField::interpolate(&fine, |p| [p[0], 0.0]);
        for c in o.apply_d(&u).components {
            assert_relative_eq!(c[0], 1.0, max_relative = 1e-13);
            assert!(c[1].abs() < 1e-13 && c[2].abs() < 1e-13);
        }
        // rigid rotation is in the kernel
        let rot = VelocityField::interpolate(&fine, |p| [p[1], -p[0]]);
        for c in o.apply_d(&rot).components {
            assert!(c.iter().all(|v| v.abs() < 1e-13));
        }
        // simple shear
        let shear = VelocityField::interpolate(&fine, |p| [p[1], 0.0]);
        for c in o.apply_d(&shear).components {
            assert!(c[0].abs() < 1e-13 && c[1].abs() < 1e-13);
            assert_relative_eq!(c[2], 0.5, max_relative = 1e-13);
        }
    }

    #[test]
    fn rigid_motion_kernel_random() {
        let (_, fine, o) = ops(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (a1, a2, b): (f64, f64, f64) =
                (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let u = VelocityField::interpolate(&fine, |p| [a1 + b * p[1], a2 - b * p[0]]);
            let du = o.apply_d(&u);
            let max = du.components.iter().flatten().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(max <= 1e-12, "rigid motion leaked through D: {max:e}");
        }
    }

    #[test]
    fn inner_q_examples() {
        let (_, fine) = pair(2);
        let a = TensorField::constant(&fine, [1.0, 0.0, 0.0]);
        assert_relative_eq!(inner_q(&fine, &a, &a).unwrap(), 1.0, max_relative = 1e-13);

        let c = TensorField::constant(&fine, [0.0, 0.0, 1.0]);
        // off-diagonal counts twice
        assert_relative_eq!(inner_q(&fine, &c, &c).unwrap(), 2.0, max_relative = 1e-13);

        let b = TensorField::constant(&fine, [0.0, 1.0, 0.0]);
        assert_eq!(inner_q(&fine, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn inner_q_symmetry_and_norm_consistency() {
        let (_, fine) = pair(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let mut rand_field = || {
            TensorField::from_components(
                (0..fine.n_triangles())
                    .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                    .collect(),
                fine.stamp(),
            )
        };
        for _ in 0..20 {
            let (a, b) = (rand_field(), rand_field());
            assert_eq!(inner_q(&fine, &a, &b).unwrap(), inner_q(&fine, &b, &a).unwrap());
            let n = norm_q(&fine, &a, 2.0).unwrap();
            assert_relative_eq!(n * n, inner_q(&fine, &a, &a).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn norm_q_examples() {
        let (_, fine) = pair(4);
        let a = TensorField::constant(&fine, [3.0, 0.0, 0.0]);
        assert_relative_eq!(norm_q(&fine, &a, 2.0).unwrap(), 3.0, max_relative = 1e-13);
        assert_relative_eq!(norm_q(&fine, &a, 1.5).unwrap(), 3.0, max_relative = 1e-13);

        // field supported on half the elements with |a| = 1
        let half = fine.n_triangles() / 2;
        let comps: Vec<[f64; 3]> =
            (0..fine.n_triangles()).map(|e| if e < half { [1.0, 0.0, 0.0] } else { [0.0; 3] }).collect();
        let marked_area: f64 = (0..half).map(|e| fine.triangle_area(e)).sum();
        let f = TensorField::from_components(comps, fine.stamp());
        assert_relative_eq!(norm_q(&fine, &f, 2.0).unwrap(), marked_area.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn error_norm_examples() {
        let (_, fine) = pair(3);
        let u = VelocityField::interpolate(&fine, |p| [p[1] * p[0], 0.3]);
        assert_eq!(error_norm_u(&fine, &u, &u, 2.0).unwrap(), 0.0);

        let zero = VelocityField::zeros(&fine);
        let c = VelocityField::interpolate(&fine, |_| [0.6, -0.8]);
        assert_relative_eq!(error_norm_u(&fine, &c, &zero, 2.0).unwrap(), 1.0, max_relative = 1e-13);

        // u - ref = (x1, 0): squared norm = int x1^2 + int |grad|^2 = 1/3 + 1
        let lin = VelocityField::interpolate(&fine, |p| [p[0], 0.0]);
        assert_relative_eq!(
            error_norm_u(&fine, &lin, &zero, 2.0).unwrap(),
            (4.0f64 / 3.0).sqrt(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn load_vector_examples() {
        let (_, fine) = pair(4);
        let zero = load_vector(&fine, |_| [0.0, 0.0]);
        assert!(zero.iter().all(|&v| v == 0.0));

        // partition of unity: entries sum to f * |Omega|
        let load = load_vector(&fine, |_| [1.0, 0.0]);
        let sx: f64 = load.iter().step_by(2).sum();
        let sy: f64 = load.iter().skip(1).step_by(2).sum();
        assert_relative_eq!(sx, 1.0, max_relative = 1e-12);
        assert!(sy.abs() <= 1e-15);

        // rotational force against its own interpolant: 300 * int |x - c|^2 = 50
        let f = |p: Point| [300.0 * (p[1] - 0.5), 300.0 * (0.5 - p[0])];
        let load = load_vector(&fine, f);
        let u = VelocityField::interpolate(&fine, |p| [p[1] - 0.5, 0.5 - p[0]]);
        let dot: f64 = load.iter().zip(&u.values).map(|(a, b)| a * b).sum();
        assert_relative_eq!(dot, 50.0, max_relative = 1e-12);
    }

    #[test]
    fn adjoint_consistency_d_and_dt() {
        let (_, fine, o) = ops(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let u = VelocityField::from_values(
                (0..2 * fine.n_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                fine.stamp(),
            );
            let t = TensorField::from_components(
                (0..fine.n_triangles())
                    .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                    .collect(),
                fine.stamp(),
            );
            let lhs = inner_q(&fine, &o.apply_d(&u), &t).unwrap();
            let rhs: f64 = o.apply_dt_mq(&t).iter().zip(&u.values).map(|(a, b)| a * b).sum();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn divergence_free_fields_annihilate_b() {
        let (_, fine, o) = ops(3);
        // rigid rotation about the centre: divergence-free
        let u = VelocityField::interpolate(&fine, |p| [p[1] - 0.5, 0.5 - p[0]]);
        let div = o.div_per_element(&u.values);
        assert!(div.iter().all(|&d| d.abs() <= 1e-13));
        let b = o.apply_b(&u.values);
        let max = b.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max <= 1e-13, "B applied to divergence-free field: {max:e}");
        // and B^T against constant pressures vanishes on free DOFs
        let bt = o.apply_bt(&vec![1.0; o.n_pressure_dofs]);
        let max_free = o.free_dofs.iter().map(|&d| bt[d].abs()).fold(0.0, f64::max);
        assert!(max_free <= 1e-13);
    }

    #[test]
    fn pressure_weights_sum_to_domain_area() {
        let (_, _, o) = ops(3);
        let total: f64 = o.pressure_weights.iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-13);
        let mut p: Vec<f64> = (0..o.n_pressure_dofs).map(|i| i as f64).collect();
        o.project_zero_mean(&mut p);
        assert!(o.pressure_integral(&p).abs() <= 1e-12);
    }

    #[test]
    fn mismatched_mesh_is_rejected() {
        let (_, fine) = pair(2);
        let (_, other) = pair(3);
        let a = TensorField::zeros(&fine);
        let b = TensorField::zeros(&other);
        assert!(inner_q(&fine, &a, &b).is_err());
        let c2 = build_structured_cavity(2).unwrap();
        let f3 = refine_midpoints(&build_structured_cavity(3).unwrap());
        assert!(assemble(&f3, &c2, &DirichletSpec::homogeneous(&f3)).is_err());
    }
}
