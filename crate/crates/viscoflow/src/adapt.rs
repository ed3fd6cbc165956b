//! Residual-driven adaptive refinement loop.
//!
//! Each cycle solves to tolerance, computes the per-element residual
//! `|D u - strain_rate|`, marks the coarse parents of all fine elements whose
//! residual exceeds the configured percentile, refines with the conforming
//! red-green closure and transfers the converged fields to the new mesh as a
//! warm start (stress and strain rate by piecewise-constant transfer, pressure
//! by nodal interpolation; the extrapolation history is mesh-specific, so the
//! momentum sequence restarts at t = 1).

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::fem::TensorField;
use crate::mesh::{refine_marked, refine_midpoints, CoarseMesh, FineMesh, TriLocator};
use crate::optim::{self, Solution, SolverConfig, WarmStart};
use crate::scenario::{Discretization, Scenario};
use crate::transfer::{interpolate_pressure, interpolate_tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    /// Percentile of the residual distribution above which fine elements
    /// trigger refinement of their coarse parent.
    pub percentile: f64,
    /// Number of refine/re-solve cycles after the initial solve.
    pub cycles: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig { percentile: 60.0, cycles: 3 }
    }
}

/// Nearest-rank percentile of a sample.
fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (percentile / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Marks the coarse triangles to refine: the threshold is the requested
/// percentile of the per-fine-element residual magnitudes, and a coarse
/// triangle is marked iff any of its children strictly exceeds it.
pub fn mark_by_residual(
    fine: &FineMesh,
    residual: &TensorField,
    percentile: f64,
) -> BTreeSet<usize> {
    let magnitudes = residual.magnitudes();
    let mut sorted = magnitudes.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let threshold = nearest_rank(&sorted, percentile);
    let mut marks = BTreeSet::new();
    for (e, &m) in magnitudes.iter().enumerate() {
        if m > threshold {
            marks.insert(fine.parent[e]);
        }
    }
    marks
}

/// Per-cycle bookkeeping of the adaptive loop.
#[derive(Clone, Debug)]
pub struct CycleStats {
    pub cycle: usize,
    pub coarse_triangles: usize,
    pub fine_elements: usize,
    pub iterations: usize,
    pub converged: bool,
    pub solve_seconds: f64,
    /// Coarse triangles marked from this cycle's residual (zero on the last).
    pub marked: usize,
}

/// Result of [`refine_loop`]: the final solution with its discretisation,
/// the mesh of every cycle, and a timing report.
pub struct AdaptiveRun {
    pub solution: Solution,
    pub discretization: Discretization,
    pub meshes: Vec<CoarseMesh>,
    pub stats: Vec<CycleStats>,
    /// Cycle at which a solve failed to converge, if any.
    pub aborted_at: Option<usize>,
}

impl AdaptiveRun {
    pub fn total_solve_seconds(&self) -> f64 {
        self.stats.iter().map(|s| s.solve_seconds).sum()
    }
}

/// Alternates solve, mark, refine and interpolate for `adapt.cycles` cycles.
/// A cycle whose solve hits the iteration cap aborts the loop; the partial
/// results up to and including that cycle are returned with `aborted_at` set.
pub fn refine_loop(
    scenario: &Scenario,
    solver: &SolverConfig,
    adapt: &AdaptConfig,
) -> Result<AdaptiveRun> {
    if !(adapt.percentile > 0.0 && adapt.percentile < 100.0) {
        return Err(Error::InvalidConfig(format!(
            "adapt.percentile must lie in (0, 100), got {}",
            adapt.percentile
        )));
    }
    let mut coarse = crate::mesh::build_structured_cavity(scenario.n)?;
    let mut warm = WarmStart::default();
    let mut meshes = Vec::new();
    let mut stats = Vec::new();

    for cycle in 0..=adapt.cycles {
        let disc = scenario.discretize_coarse(coarse.clone())?;
        let started = Instant::now();
        let solution = optim::solve_with(
            &disc.problem(&scenario.model, None),
            solver,
            std::mem::take(&mut warm),
            None,
        )?;
        let solve_seconds = started.elapsed().as_secs_f64();
        meshes.push(disc.coarse.clone());

        let last = cycle == adapt.cycles || !solution.converged;
        let mut marked = 0;
        if !last {
            let du = disc.ops.apply_d(&solution.velocity);
            let residual = TensorField::lin_comb(1.0, &du, -1.0, &solution.strain_rate);
            let marks = mark_by_residual(&disc.fine, &residual, adapt.percentile);
            marked = marks.len();
            let refined = refine_marked(&disc.coarse, &marks)?;
            let refined_fine = refine_midpoints(&refined);
            warm = WarmStart {
                stress: Some(interpolate_tensor(&refined_fine, &disc.fine, &solution.stress)?),
                strain_rate: Some(interpolate_tensor(
                    &refined_fine,
                    &disc.fine,
                    &solution.strain_rate,
                )?),
                pressure: Some(interpolate_pressure(&refined, &disc.coarse, &solution.pressure)?),
            };
            coarse = refined;
        }
        stats.push(CycleStats {
            cycle,
            coarse_triangles: disc.coarse.n_triangles(),
            fine_elements: disc.fine.n_triangles(),
            iterations: solution.iterations,
            converged: solution.converged,
            solve_seconds,
            marked,
        });
        if last {
            let aborted_at = (!solution.converged).then_some(cycle);
            return Ok(AdaptiveRun { solution, discretization: disc, meshes, stats, aborted_at });
        }
    }
    unreachable!("loop returns on the final cycle")
}

/// Fraction of each footprint triangle covered by unyielded fine elements
/// (`|stress| <= Bi`), located by centroid. Lets solutions from unrelated
/// refinements of the same initial grid be compared cell by cell.
pub fn unyielded_area_fractions(
    footprint: &CoarseMesh,
    fine: &FineMesh,
    stress: &TensorField,
    bi: f64,
) -> Result<Vec<f64>> {
    let locator = TriLocator::new(&footprint.vertices, &footprint.triangles);
    let mut unyielded = vec![0.0f64; footprint.n_triangles()];
    for e in 0..fine.n_triangles() {
        if stress.magnitude(e) <= bi {
            let c = fine.centroid(e);
            let (t, _) = locator
                .locate(&footprint.vertices, &footprint.triangles, c)
                .ok_or(Error::PointLocation(c[0], c[1]))?;
            unyielded[t] += fine.triangle_area(e);
        }
    }
    Ok(unyielded
        .iter()
        .enumerate()
        .map(|(t, &a)| a / footprint.triangle_area(t))
        .collect())
}

/// Jaccard index of two Boolean masks.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_cavity;
    use rand::{Rng, SeedableRng};

    fn fine_mesh(n: usize) -> FineMesh {
        refine_midpoints(&build_structured_cavity(n).unwrap())
    }

    #[test]
    fn zero_residual_marks_nothing() {
        let fine = fine_mesh(2);
        let residual = TensorField::zeros(&fine);
        assert!(mark_by_residual(&fine, &residual, 60.0).is_empty());
    }

    #[test]
    fn single_hot_element_marks_its_parent() {
        let fine = fine_mesh(2);
        let mut comps = vec![[0.0; 3]; fine.n_triangles()];
        comps[13] = [1.0, 0.0, 0.0];
        let residual = TensorField::from_components(comps, fine.stamp());
        let marks = mark_by_residual(&fine, &residual, 60.0);
        assert_eq!(marks.len(), 1);
        assert!(marks.contains(&fine.parent[13]));
    }

    #[test]
    fn uniform_random_residuals_mark_enough_parents() {
        let fine = fine_mesh(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let comps: Vec<[f64; 3]> =
            (0..fine.n_triangles()).map(|_| [rng.random_range(0.1..1.0), 0.0, 0.0]).collect();
        let residual = TensorField::from_components(comps, fine.stamp());
        let marks = mark_by_residual(&fine, &residual, 60.0);
        // about 40% of fine elements exceed the threshold; each coarse parent
        // covers at most 4 of them
        let n_fine = fine.n_triangles();
        assert!(marks.len() >= (2 * n_fine / 5) / 4);
        assert!(marks.len() <= n_fine / 4);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(nearest_rank(&sorted, 60.0), 3.0);
        assert_eq!(nearest_rank(&sorted, 50.0), 3.0);
        assert_eq!(nearest_rank(&sorted, 40.0), 2.0);
        assert_eq!(nearest_rank(&sorted, 99.0), 5.0);
    }

    #[test]
    fn jaccard_masks() {
        assert_eq!(jaccard(&[true, false, true], &[true, true, false]), 1.0 / 3.0);
        assert_eq!(jaccard(&[false; 3], &[false; 3]), 1.0);
    }
}
