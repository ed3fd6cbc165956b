//! Command drivers behind the CLI: execute a configuration document and
//! write the requested artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::ConfigDoc;
use crate::constitutive::ConstitutiveModel;
use crate::fem::TensorField;
use crate::optim::{self, Algorithm, Solution, SolverConfig};
use crate::output::{self, CompareRow, RunSummary};
use crate::scenario::{Discretization, Scenario};
use crate::{Error, Result};

/// Whether the requested tolerance was reached. Hard failures use `Err`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandOutcome {
    Converged,
    IterationCap,
}

/// Process exit code: 0 converged, 2 iteration cap, 3 configuration error,
/// 4 I/O error, 1 any other failure.
pub fn exit_code(result: &Result<CommandOutcome>) -> i32 {
    match result {
        Ok(CommandOutcome::Converged) => 0,
        Ok(CommandOutcome::IterationCap) => 2,
        Err(Error::InvalidConfig(_) | Error::InvalidScenario(_)) => 3,
        Err(Error::Io { .. }) => 4,
        Err(_) => 1,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn residual_field(disc: &Discretization, solution: &Solution) -> TensorField {
    let du = disc.ops.apply_d(&solution.velocity);
    TensorField::lin_comb(1.0, &du, -1.0, &solution.strain_rate)
}

fn write_solution_artifacts(
    doc: &ConfigDoc,
    scenario: &Scenario,
    disc: &Discretization,
    solution: &Solution,
    wall_seconds: f64,
    extra_outputs: Vec<String>,
) -> Result<Vec<String>> {
    let dir = &doc.output.dir;
    ensure_dir(dir)?;
    let mut outputs = extra_outputs;
    if doc.output.csv {
        let path = dir.join("convergence.csv");
        output::write_convergence_csv(&path, &solution.record)?;
        outputs.push(path.display().to_string());
    }
    if doc.output.vtk {
        let path = dir.join("fields_final.vtk");
        output::write_vtk(
            &path,
            &disc.fine,
            &solution.velocity,
            &solution.pressure,
            &solution.stress,
            &residual_field(disc, solution),
            scenario.model.bi,
            doc.output.window_fraction,
        )?;
        outputs.push(path.display().to_string());
    }
    let summary_path = dir.join("summary.json");
    let summary = RunSummary {
        scenario: format!("{:?}", scenario.kind),
        model: format!("{:?}", scenario.model.kind),
        bi: scenario.model.bi,
        n: scenario.n,
        algorithm: doc.solver.algorithm.name().to_string(),
        converged: solution.converged,
        iterations: solution.iterations,
        final_grad_residual: solution.record.final_residual(),
        grad_tol: doc.solver.grad_tol,
        stokes_tol: doc.solver.stokes_tol,
        restarts: solution.record.restart_count(),
        wall_seconds,
        corner_treatment: "top corner vertices assigned to the side walls (velocity 0)".into(),
        outputs: outputs.clone(),
    };
    output::write_summary(&summary_path, &summary)?;
    outputs.push(summary_path.display().to_string());
    Ok(outputs)
}

/// Runs one solve and writes convergence CSV, VTK fields and a summary.
pub fn cmd_run(doc: &ConfigDoc) -> Result<CommandOutcome> {
    let scenario = doc.build_scenario()?;
    let disc = scenario.discretize()?;
    let reference = scenario
        .reference
        .as_deref()
        .map(|path| output::read_reference(path, &disc.fine))
        .transpose()?
        .map(|(u, _)| u);
    let started = Instant::now();
    let solution =
        optim::solve(&disc.problem(&scenario.model, reference.as_ref()), &doc.solver)?;
    let wall = started.elapsed().as_secs_f64();
    write_solution_artifacts(doc, &scenario, &disc, &solution, wall, Vec::new())?;
    Ok(if solution.converged { CommandOutcome::Converged } else { CommandOutcome::IterationCap })
}

/// Runs the configured algorithm grid on the configured scenario family and
/// writes one comparison table. Per-row failures (including iteration caps)
/// are recorded in the table, not fatal.
pub fn cmd_compare(doc: &ConfigDoc) -> Result<CommandOutcome> {
    if doc.compare.algorithms.len() < 2 {
        return Err(Error::InvalidConfig(
            "compare.algorithms: at least two algorithms are required".into(),
        ));
    }
    ensure_dir(&doc.output.dir)?;
    let mut rows = Vec::new();
    for &n in &doc.compare.n {
        // operators and factorization depend on the mesh only; reuse across
        // Bingham numbers and algorithms
        let probe = doc.build_scenario_with(doc.model.bi, n)?;
        let disc = probe.discretize()?;
        for &bi in &doc.compare.bi {
            let model = ConstitutiveModel::new(doc.model.kind, bi, doc.model.r)?;
            for alg in &doc.compare.algorithms {
                let solver = alg.configure(&doc.solver);
                let started = Instant::now();
                let outcome = optim::solve(&disc.problem(&model, None), &solver);
                let seconds = started.elapsed().as_secs_f64();
                let (iterations, converged) = match &outcome {
                    Ok(solution) => (solution.iterations, solution.converged),
                    Err(_) => (0, false),
                };
                rows.push(CompareRow {
                    scenario: format!("{:?}", probe.kind),
                    algorithm: alg.name().to_string(),
                    bi,
                    h: 1.0 / n as f64,
                    iterations,
                    seconds,
                    converged,
                });
            }
        }
    }
    output::write_compare_csv(&doc.output.dir.join("compare.csv"), &rows)?;
    Ok(CommandOutcome::Converged)
}

/// Runs the adaptive refinement loop and writes per-cycle statistics plus the
/// final solution artifacts.
pub fn cmd_adapt(doc: &ConfigDoc) -> Result<CommandOutcome> {
    let scenario = doc.build_scenario()?;
    let started = Instant::now();
    let run = crate::adapt::refine_loop(&scenario, &doc.solver, &doc.adapt)?;
    let wall = started.elapsed().as_secs_f64();

    ensure_dir(&doc.output.dir)?;
    let cycles_path = doc.output.dir.join("cycles.csv");
    let mut text =
        String::from("cycle,coarse_triangles,fine_elements,iterations,converged,solve_seconds,marked\n");
    for s in &run.stats {
        use std::fmt::Write as _;
        let _ = writeln!(
            text,
            "{},{},{},{},{},{:.3},{}",
            s.cycle,
            s.coarse_triangles,
            s.fine_elements,
            s.iterations,
            s.converged as u8,
            s.solve_seconds,
            s.marked
        );
    }
    std::fs::write(&cycles_path, text)
        .map_err(|e| Error::io(cycles_path.display().to_string(), e))?;

    write_solution_artifacts(
        doc,
        &scenario,
        &run.discretization,
        &run.solution,
        wall,
        vec![cycles_path.display().to_string()],
    )?;
    Ok(if run.aborted_at.is_none() {
        CommandOutcome::Converged
    } else {
        CommandOutcome::IterationCap
    })
}

/// Computes a reference solution: a fixed budget of FISTA* iterations
/// (`solver.max_iterations`, tolerance stop disabled) stored as a binary
/// field dump for later error reporting.
pub fn cmd_reference(doc: &ConfigDoc) -> Result<PathBuf> {
    let scenario = doc.build_scenario()?;
    let disc = scenario.discretize()?;
    let solver = SolverConfig {
        algorithm: Algorithm::FistaStar,
        grad_tol: 0.0,
        restart: false,
        ..doc.solver
    };
    let solution = optim::fista_star(&disc.problem(&scenario.model, None), &solver)?;
    ensure_dir(&doc.output.dir)?;
    let path = doc.output.dir.join("reference.bin");
    output::write_reference(&path, &disc.fine, &scenario.model, solution.iterations, &solution.velocity)?;
    Ok(path)
}
