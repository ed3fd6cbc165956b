use std::collections::BTreeSet;
use viscoflow::adapt;
use viscoflow::constitutive::ConstitutiveModel;
use viscoflow::fem::TensorField;
use viscoflow::mesh::{build_structured_cavity, refine_marked, refine_midpoints};
use viscoflow::optim::{self, SolverConfig, WarmStart};
use viscoflow::scenario::Scenario;
use viscoflow::transfer::{interpolate_pressure, interpolate_tensor, interpolate_velocity};

fn main() {
    // casson residual trajectory
    let casson = ConstitutiveModel::casson(10.0 * 2.0f64.sqrt()).unwrap();
    let sc = Scenario::force_driven(casson, 16);
    let disc = sc.discretize().unwrap();
    let cfg = SolverConfig { grad_tol: 0.0, max_iterations: 3000, ..Default::default() };
    let sol = optim::fista_star(&disc.problem(&casson, None), &cfg).unwrap();
    for k in [100, 500, 1000, 2000, 3000] {
        println!("casson res @{k}: {:.2e}", sol.record.rows[k - 1].grad_residual);
    }

    // adaptive loop: residual-contribution trend + interpolated-pair residual
    let model = ConstitutiveModel::bingham(20.0).unwrap();
    let solver = SolverConfig { grad_tol: 1e-4, max_iterations: 5000, ..Default::default() };
    let sc = Scenario::lid_driven(model, 16);
    let mut coarse = build_structured_cavity(16).unwrap();
    let mut warm = WarmStart::default();
    let mut prev_final = None::<f64>;
    for cycle in 0..=3 {
        let disc = sc.discretize_coarse(coarse.clone()).unwrap();
        let sol = optim::solve_with(&disc.problem(&model, None), &solver, warm, None).unwrap();
        let du = disc.ops.apply_d(&sol.velocity);
        let residual = TensorField::lin_comb(1.0, &du, -1.0, &sol.strain_rate);
        let mags = residual.magnitudes();
        let max_contrib = mags
            .iter()
            .enumerate()
            .map(|(e, m)| disc.fine.triangle_area(e).sqrt() * m)
            .fold(0.0f64, f64::max);
        let max_elem = mags.iter().fold(0.0f64, |m, &v| m.max(v));
        println!(
            "cycle {cycle}: fine {:6} max|r| {:.3e}  max sqrt(A)|r| {:.3e} final {:.3e}",
            disc.fine.n_triangles(), max_elem, max_contrib, sol.record.final_residual().unwrap()
        );
        if cycle == 3 { break; }
        let marks: BTreeSet<usize> = adapt::mark_by_residual(&disc.fine, &residual, 60.0);
        let refined = refine_marked(&disc.coarse, &marks).unwrap();
        let rf = refine_midpoints(&refined);
        // interpolated-pair residual on the new mesh
        let u_i = interpolate_velocity(&rf, &disc.fine, &sol.velocity).unwrap();
        let g_i = interpolate_tensor(&rf, &disc.fine, &sol.strain_rate).unwrap();
        let new_disc = sc.discretize_coarse(refined.clone()).unwrap();
        let du_i = new_disc.ops.apply_d(&u_i);
        let pair_res = viscoflow::fem::norm_q(
            &rf,
            &TensorField::lin_comb(1.0, &du_i, -1.0, &g_i),
            2.0,
        )
        .unwrap();
        let prev = sol.record.final_residual().unwrap();
        println!("  interpolated-pair residual on refined mesh: {:.3e} ({}x previous)", pair_res, (pair_res / prev) as i64);
        prev_final = Some(prev);
        warm = WarmStart {
            stress: Some(interpolate_tensor(&rf, &disc.fine, &sol.stress).unwrap()),
            strain_rate: Some(g_i),
            pressure: Some(interpolate_pressure(&refined, &disc.coarse, &sol.pressure).unwrap()),
        };
        coarse = refined;
    }
    let _ = prev_final;
}
