//! File outputs: convergence CSV, legacy-ASCII VTK fields, comparison tables,
//! run summaries and binary reference-solution dumps.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::constitutive::ConstitutiveModel;
use crate::fem::{PressureField, TensorField, VelocityField};
use crate::mesh::FineMesh;
use crate::optim::ConvergenceRecord;
use crate::{Error, Result};

/// Fixed column schema of the per-iteration convergence log.
pub const CSV_HEADER: &str =
    "iter,cpu_seconds,grad_residual,dual_objective,primal_objective,L,restarted,error_vs_reference";

pub fn write_convergence_csv(path: &Path, record: &ConvergenceRecord) -> Result<()> {
    let mut text = String::with_capacity(64 * record.rows.len() + 64);
    text.push_str(CSV_HEADER);
    text.push('\n');
    for row in &record.rows {
        let error = row.error_vs_reference.map(|e| format!("{e:e}")).unwrap_or_default();
        let _ = writeln!(
            text,
            "{},{:e},{:e},{:e},{:e},{:e},{},{}",
            row.k,
            row.cpu_seconds,
            row.grad_residual,
            row.dual_objective,
            row.primal_objective,
            row.lipschitz,
            row.restarted as u8,
            error
        );
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One row of the algorithm comparison table.
#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub scenario: String,
    pub algorithm: String,
    pub bi: f64,
    pub h: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
}

pub fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut text = String::from("scenario,algorithm,Bi,h,iterations,seconds,converged\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{:.3},{}",
            r.scenario, r.algorithm, r.bi, r.h, r.iterations, r.seconds, r.converged as u8
        );
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Clamps the stress magnitude into the visualisation window
/// `[Bi (1 - w), Bi (1 + w)]` and classifies each element
/// (`true` = unyielded, `|tau| <= Bi`). Values outside the window are
/// projected onto its end points.
pub fn yield_window(stress: &TensorField, bi: f64, window_fraction: f64) -> (Vec<f64>, Vec<bool>) {
    let (lo, hi) = (bi * (1.0 - window_fraction), bi * (1.0 + window_fraction));
    let mut window = Vec::with_capacity(stress.len());
    let mut unyielded = Vec::with_capacity(stress.len());
    for e in 0..stress.len() {
        let m = stress.magnitude(e);
        window.push(m.clamp(lo, hi));
        unyielded.push(m <= bi);
    }
    (window, unyielded)
}

/// Evaluates a coarse P1 pressure at the fine vertices (exact: fine vertices
/// are coarse vertices or coarse edge midpoints).
pub fn pressure_at_fine_vertices(fine: &FineMesh, p: &PressureField) -> Vec<f64> {
    let mut out = Vec::with_capacity(fine.n_vertices());
    out.extend_from_slice(&p.values[..fine.coarse_vertex_count]);
    for pair in &fine.midpoint_parents {
        out.push(0.5 * (p.values[pair[0]] + p.values[pair[1]]));
    }
    out
}

/// Writes the solution fields as a legacy-ASCII VTK unstructured grid:
/// velocity (point vectors), pressure (point scalars), and per-cell stress
/// magnitude, clamped yield window, yield flag and residual magnitude.
#[allow(clippy::too_many_arguments)]
pub fn write_vtk(
    path: &Path,
    fine: &FineMesh,
    velocity: &VelocityField,
    pressure: &PressureField,
    stress: &TensorField,
    residual: &TensorField,
    bi: f64,
    window_fraction: f64,
) -> Result<()> {
    let nv = fine.n_vertices();
    let nt = fine.n_triangles();
    let mut text = String::with_capacity(40 * (nv + nt));
    text.push_str("# vtk DataFile Version 3.0\n");
    text.push_str("viscoflow solution fields\n");
    text.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    let _ = writeln!(text, "POINTS {nv} double");
    for p in &fine.vertices {
        let _ = writeln!(text, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(text, "CELLS {nt} {}", 4 * nt);
    for t in &fine.triangles {
        let _ = writeln!(text, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(text, "CELL_TYPES {nt}");
    for _ in 0..nt {
        text.push_str("5\n");
    }

    let _ = writeln!(text, "POINT_DATA {nv}");
    text.push_str("VECTORS velocity double\n");
    for v in 0..nv {
        let u = velocity.at(v);
        let _ = writeln!(text, "{} {} 0", u[0], u[1]);
    }
    text.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for value in pressure_at_fine_vertices(fine, pressure) {
        let _ = writeln!(text, "{value}");
    }

    let (window, unyielded) = yield_window(stress, bi, window_fraction);
    let _ = writeln!(text, "CELL_DATA {nt}");
    text.push_str("SCALARS stress_magnitude double 1\nLOOKUP_TABLE default\n");
    for e in 0..nt {
        let _ = writeln!(text, "{}", stress.magnitude(e));
    }
    text.push_str("SCALARS stress_window double 1\nLOOKUP_TABLE default\n");
    for value in &window {
        let _ = writeln!(text, "{value}");
    }
    text.push_str("SCALARS unyielded int 1\nLOOKUP_TABLE default\n");
    for flag in &unyielded {
        let _ = writeln!(text, "{}", *flag as u8);
    }
    text.push_str("SCALARS residual double 1\nLOOKUP_TABLE default\n");
    for e in 0..nt {
        let _ = writeln!(text, "{}", residual.magnitude(e));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Run summary written next to the field outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub model: String,
    pub bi: f64,
    pub n: usize,
    pub algorithm: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_residual: Option<f64>,
    pub grad_tol: f64,
    pub stokes_tol: f64,
    pub restarts: usize,
    pub wall_seconds: f64,
    /// The lid discontinuity is regularised by assigning both top corner
    /// vertices to the side walls (zero velocity).
    pub corner_treatment: String,
    pub outputs: Vec<String>,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serialises");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

const REFERENCE_MAGIC: &str = "VISCOFLOW-REFERENCE 1";

/// Writes a reference velocity as a binary dump with a text header carrying
/// the mesh checksum, model and iteration count.
pub fn write_reference(
    path: &Path,
    fine: &FineMesh,
    model: &ConstitutiveModel,
    iterations: usize,
    velocity: &VelocityField,
) -> Result<()> {
    let io = |e| Error::io(path.display().to_string(), e);
    let mut file = std::fs::File::create(path).map_err(io)?;
    let header = format!(
        "{REFERENCE_MAGIC}\nmesh {:016x}\nmodel {:?} bi {:e} r {:e}\niterations {}\nvalues {}\nEND\n",
        fine.stamp(),
        model.kind,
        model.bi,
        model.r,
        iterations,
        velocity.values.len(),
    );
    file.write_all(header.as_bytes()).map_err(io)?;
    let mut bytes = Vec::with_capacity(8 * velocity.values.len());
    for v in &velocity.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes).map_err(io)
}

/// Reads a reference velocity back, insisting that it was produced on a mesh
/// with the same checksum.
pub fn read_reference(path: &Path, fine: &FineMesh) -> Result<(VelocityField, usize)> {
    let io = |e| Error::io(path.display().to_string(), e);
    let mut raw = Vec::new();
    std::fs::File::open(path).map_err(io)?.read_to_end(&mut raw).map_err(io)?;
    let header_end = raw
        .windows(4)
        .position(|w| w == b"END\n")
        .ok_or_else(|| Error::ReferenceFormat("missing END marker".into()))?
        + 4;
    let header = std::str::from_utf8(&raw[..header_end])
        .map_err(|_| Error::ReferenceFormat("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some(REFERENCE_MAGIC) {
        return Err(Error::ReferenceFormat("not a reference file".into()));
    }
    let mut mesh_stamp = None;
    let mut iterations = 0usize;
    let mut count = None;
    for line in lines {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("mesh") => {
                let hex = parts.next().ok_or_else(|| Error::ReferenceFormat("mesh line".into()))?;
                mesh_stamp = Some(
                    u64::from_str_radix(hex, 16)
                        .map_err(|_| Error::ReferenceFormat("bad mesh checksum".into()))?,
                );
            }
            Some("iterations") => {
                iterations = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::ReferenceFormat("bad iteration count".into()))?;
            }
            Some("values") => {
                count = parts.next().and_then(|s| s.parse::<usize>().ok());
            }
            _ => {}
        }
    }
    if mesh_stamp != Some(fine.stamp()) {
        return Err(Error::ReferenceFormat(
            "reference was computed on a different mesh (checksum mismatch)".into(),
        ));
    }
    let count =
        count.ok_or_else(|| Error::ReferenceFormat("missing value count".into()))?;
    if count != 2 * fine.n_vertices() {
        return Err(Error::ReferenceFormat("value count does not match the mesh".into()));
    }
    let body = &raw[header_end..];
    if body.len() != 8 * count {
        return Err(Error::ReferenceFormat(format!(
            "expected {} bytes of data, found {}",
            8 * count,
            body.len()
        )));
    }
    let values: Vec<f64> =
        body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((VelocityField::from_values(values, fine.stamp()), iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::TensorField;
    use crate::mesh::{build_structured_cavity, refine_midpoints};

    #[test]
    fn yield_window_clamps_and_flags() {
        let fine = refine_midpoints(&build_structured_cavity(1).unwrap());
        let bi = 10.0;
        let w = 0.001;
        // |tau| = Bi exactly: unyielded, window value Bi
        let at = TensorField::constant(&fine, [bi, 0.0, 0.0]);
        let (win, flags) = yield_window(&at, bi, w);
        assert!(win.iter().all(|&v| v == bi));
        assert!(flags.iter().all(|&f| f));
        // |tau| = 2 Bi: clamped to the upper end, yielded
        let above = TensorField::constant(&fine, [2.0 * bi, 0.0, 0.0]);
        let (win, flags) = yield_window(&above, bi, w);
        assert!(win.iter().all(|&v| v == bi * (1.0 + w)));
        assert!(flags.iter().all(|&f| !f));
        // |tau| = 0: clamped to the lower end, unyielded
        let zero = TensorField::zeros(&fine);
        let (win, flags) = yield_window(&zero, bi, w);
        assert!(win.iter().all(|&v| v == bi * (1.0 - w)));
        assert!(flags.iter().all(|&f| f));
    }

    #[test]
    fn reference_round_trip_and_mesh_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.bin");
        let coarse = build_structured_cavity(2).unwrap();
        let fine = refine_midpoints(&coarse);
        let model = ConstitutiveModel::bingham(3.0).unwrap();
        let u = VelocityField::interpolate(&fine, |p| [p[0] * p[1], -p[1]]);
        write_reference(&path, &fine, &model, 5000, &u).unwrap();
        let (back, iters) = read_reference(&path, &fine).unwrap();
        assert_eq!(iters, 5000);
        assert_eq!(back.values, u.values);

        let other = refine_midpoints(&build_structured_cavity(3).unwrap());
        assert!(read_reference(&path, &other).is_err());
    }

    #[test]
    fn vtk_structure_is_wellformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.vtk");
        let coarse = build_structured_cavity(2).unwrap();
        let fine = refine_midpoints(&coarse);
        let u = VelocityField::zeros(&fine);
        let p = PressureField::zeros(&coarse);
        let tau = TensorField::constant(&fine, [1.0, 0.5, -0.25]);
        let res = TensorField::zeros(&fine);
        write_vtk(&path, &fine, &u, &p, &tau, &res, 2.0, 1e-3).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains(&format!("POINTS {} double", fine.n_vertices())));
        assert!(text.contains(&format!("CELLS {} {}", fine.n_triangles(), 4 * fine.n_triangles())));
        assert!(text.contains(&format!("CELL_TYPES {}", fine.n_triangles())));
        assert!(text.contains(&format!("POINT_DATA {}", fine.n_vertices())));
        assert!(text.contains(&format!("CELL_DATA {}", fine.n_triangles())));
        let cell_type_count = text.lines().filter(|l| *l == "5").count();
        assert_eq!(cell_type_count, fine.n_triangles());
    }

    #[test]
    fn csv_schema_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("convergence.csv");
        let record = ConvergenceRecord {
            rows: vec![crate::optim::IterationRow {
                k: 1,
                cpu_seconds: 0.25,
                grad_residual: 1e-3,
                dual_objective: 2.0,
                primal_objective: -2.0,
                lipschitz: 0.5,
                restarted: true,
                error_vs_reference: None,
                descent_slack: None,
            }],
        };
        write_convergence_csv(&path, &record).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("1,2.5e-1,1e-3,2e0,-2e0,5e-1,1,"));
    }
}
