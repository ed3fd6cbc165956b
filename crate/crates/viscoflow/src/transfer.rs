//! Field transfer between meshes covering the same domain.
//!
//! Nodal (P1) fields are evaluated by linear interpolation at the new node
//! locations; per-element tensor fields are copied from the old element
//! containing the new element's centroid. A new point that lies outside every
//! old triangle (beyond a small barycentric tolerance) is a hard error.

use crate::fem::{PressureField, TensorField, VelocityField};
use crate::mesh::{CoarseMesh, FineMesh, Point, TriLocator};
use crate::{Error, Result};

fn interpolate_nodal<const K: usize>(
    targets: &[Point],
    vertices: &[Point],
    triangles: &[[usize; 3]],
    values: &[f64],
) -> Result<Vec<f64>> {
    let locator = TriLocator::new(vertices, triangles);
    let mut out = Vec::with_capacity(K * targets.len());
    for &p in targets {
        let (t, bary) = locator
            .locate(vertices, triangles, p)
            .ok_or(Error::PointLocation(p[0], p[1]))?;
        for c in 0..K {
            let v: f64 =
                (0..3).map(|k| bary[k] * values[K * triangles[t][k] + c]).sum();
            out.push(v);
        }
    }
    Ok(out)
}

/// P1 interpolation of a velocity field onto a new fine mesh.
pub fn interpolate_velocity(
    new_fine: &FineMesh,
    old_fine: &FineMesh,
    u: &VelocityField,
) -> Result<VelocityField> {
    if u.stamp() != old_fine.stamp() {
        return Err(Error::MeshMismatch("velocity field does not live on the source mesh".into()));
    }
    let values = interpolate_nodal::<2>(
        &new_fine.vertices,
        &old_fine.vertices,
        &old_fine.triangles,
        &u.values,
    )?;
    Ok(VelocityField::from_values(values, new_fine.stamp()))
}

/// P1 interpolation of a pressure field onto a new coarse mesh.
pub fn interpolate_pressure(
    new_coarse: &CoarseMesh,
    old_coarse: &CoarseMesh,
    p: &PressureField,
) -> Result<PressureField> {
    if p.stamp() != old_coarse.stamp() {
        return Err(Error::MeshMismatch("pressure field does not live on the source mesh".into()));
    }
    let values = interpolate_nodal::<1>(
        &new_coarse.vertices,
        &old_coarse.vertices,
        &old_coarse.triangles,
        &p.values,
    )?;
    Ok(PressureField::from_values(values, new_coarse.stamp()))
}

/// Piecewise-constant transfer of a tensor field: each new element takes the
/// value of the old element containing its centroid.
pub fn interpolate_tensor(
    new_fine: &FineMesh,
    old_fine: &FineMesh,
    t: &TensorField,
) -> Result<TensorField> {
    if t.stamp() != old_fine.stamp() {
        return Err(Error::MeshMismatch("tensor field does not live on the source mesh".into()));
    }
    let locator = TriLocator::new(&old_fine.vertices, &old_fine.triangles);
    let mut components = Vec::with_capacity(new_fine.n_triangles());
    for e in 0..new_fine.n_triangles() {
        let c = new_fine.centroid(e);
        let (old, _) = locator
            .locate(&old_fine.vertices, &old_fine.triangles, c)
            .ok_or(Error::PointLocation(c[0], c[1]))?;
        components.push(t.components[old]);
    }
    Ok(TensorField::from_components(components, new_fine.stamp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_cavity, refine_marked, refine_midpoints};
    use approx::assert_relative_eq;
    use std::collections::BTreeSet;

    #[test]
    fn identity_on_same_mesh() {
        let coarse = build_structured_cavity(2).unwrap();
        let fine = refine_midpoints(&coarse);
        let u = VelocityField::interpolate(&fine, |p| [p[0] * p[1], p[1] - 0.2]);
        let v = interpolate_velocity(&fine, &fine, &u).unwrap();
        for (a, b) in u.values.iter().zip(&v.values) {
            assert_relative_eq!(a, b, max_relative = 1e-13, epsilon = 1e-14);
        }
        let t = TensorField::from_components(
            (0..fine.n_triangles()).map(|e| [e as f64, 1.0, -0.5]).collect(),
            fine.stamp(),
        );
        let s = interpolate_tensor(&fine, &fine, &t).unwrap();
        assert_eq!(t.components, s.components);
    }

    #[test]
    fn linear_fields_are_reproduced_on_refinements() {
        let coarse = build_structured_cavity(2).unwrap();
        let fine = refine_midpoints(&coarse);
        let marks: BTreeSet<usize> = [3usize, 7].into_iter().collect();
        let refined_coarse = refine_marked(&coarse, &marks).unwrap();
        let refined_fine = refine_midpoints(&refined_coarse);

        let u = VelocityField::interpolate(&fine, |p| [p[0], p[1]]);
        let v = interpolate_velocity(&refined_fine, &fine, &u).unwrap();
        let exact = VelocityField::interpolate(&refined_fine, |p| [p[0], p[1]]);
        for (a, b) in v.values.iter().zip(&exact.values) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-13);
        }

        let p_old = PressureField::from_values(
            coarse.vertices.iter().map(|v| 2.0 * v[0] - v[1]).collect(),
            coarse.stamp(),
        );
        let p_new = interpolate_pressure(&refined_coarse, &coarse, &p_old).unwrap();
        for (vert, val) in refined_coarse.vertices.iter().zip(&p_new.values) {
            assert_relative_eq!(val, &(2.0 * vert[0] - vert[1]), max_relative = 1e-12, epsilon = 1e-13);
        }

        let t = TensorField::constant(&fine, [1.5, -0.25, 3.0]);
        let s = interpolate_tensor(&refined_fine, &fine, &t).unwrap();
        assert!(s.components.iter().all(|&c| c == [1.5, -0.25, 3.0]));
    }

    #[test]
    fn wrong_source_mesh_is_rejected() {
        let coarse = build_structured_cavity(2).unwrap();
        let fine = refine_midpoints(&coarse);
        let other = refine_midpoints(&build_structured_cavity(3).unwrap());
        let u = VelocityField::zeros(&other);
        assert!(interpolate_velocity(&fine, &fine, &u).is_err());
    }
}
