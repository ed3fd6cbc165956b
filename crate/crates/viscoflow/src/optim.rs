//! Outer optimisation drivers for the dual viscoplastic flow problem.
//!
//! All three solvers iterate on the stress `tau` subject to the discrete
//! momentum constraint and share the same per-iteration building blocks: a
//! pointwise nonlinear map (dual gradient or prox) and one Stokes solve.
//!
//! * `fista_star` — accelerated dual proximal gradient iteration with a
//!   leading point, optional gradient-scheme restarting, and backtracking
//!   when no global Lipschitz constant exists (Herschel-Bulkley),
//! * `ista_star` — the same step without extrapolation,
//! * `alg2` — ADMM on the augmented formulation with penalty `rho` and dual
//!   step `s`.
//!
//! Iterations stop when the primal residual `||D u - strain_rate||_Q` drops
//! below `grad_tol`; hitting the iteration cap returns a `Solution` with
//! `converged = false` carrying the full convergence record.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveModel;
use crate::fem::{inner_q, norm_q, DiscreteOperators, PressureField, TensorField, VelocityField};
use crate::mesh::FineMesh;
use crate::stokes::StokesKernel;
use crate::{Error, Result};

const BACKTRACK_MAX_MAGNIFICATIONS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    FistaStar,
    IstaStar,
    Alg2,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FistaStar => "fista_star",
            Algorithm::IstaStar => "ista_star",
            Algorithm::Alg2 => "alg2",
        }
    }
}

/// How the primal pair `(u, strain rate)` is defined from the dual iterates
/// in FISTA*.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalMode {
    /// Reuse the leading-point quantities; free, converges in practice.
    #[default]
    LeadingPoint,
    /// Re-evaluate gradient and Stokes solve at the stress iterate
    /// (guaranteed O(1/k) primal rate, one extra solve per iteration).
    Prox,
    /// Re-evaluate the gradient at the stress iterate, then fit the velocity
    /// by least squares against the strain rate (guaranteed O(1/k)).
    LeastSquares,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Tolerance on the primal residual `||D u - strain_rate||_Q`; zero
    /// disables the tolerance stop (fixed iteration budget).
    pub grad_tol: f64,
    /// Tolerance for every inner Stokes solve (discrete divergence norm).
    pub stokes_tol: f64,
    pub max_iterations: usize,
    /// Gradient-scheme restarting of the extrapolation (FISTA* only).
    pub restart: bool,
    pub primal_mode: PrimalMode,
    /// Initial Lipschitz estimate; the trial value for backtracking.
    pub l0: f64,
    /// Backtracking magnifier.
    pub eta: f64,
    /// ALG2 augmentation penalty.
    pub rho: f64,
    /// ALG2 dual step size.
    pub s: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::FistaStar,
            grad_tol: 1e-6,
            stokes_tol: 1e-12,
            max_iterations: 5000,
            restart: false,
            primal_mode: PrimalMode::LeadingPoint,
            l0: 0.5,
            eta: 1.1,
            rho: 2.0,
            s: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("grad_tol must be nonnegative, got {}", self.grad_tol)));
        }
        if !(self.stokes_tol > 0.0) {
            return Err(Error::InvalidConfig("stokes_tol must be positive".into()));
        }
        if self.grad_tol > 0.0 && self.stokes_tol > 1e-3 * self.grad_tol {
            return Err(Error::InvalidConfig(format!(
                "stokes_tol ({:e}) must be at most grad_tol * 1e-3 ({:e}): the proximal map must be \
                 evaluated well below the outer tolerance",
                self.stokes_tol,
                1e-3 * self.grad_tol
            )));
        }
        if !(self.eta > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "backtracking magnifier eta must exceed 1, got {}",
                self.eta
            )));
        }
        if !(self.l0 > 0.0) {
            return Err(Error::InvalidConfig("initial Lipschitz estimate l0 must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.rho >= 0.0 && self.s > 0.0) {
            return Err(Error::InvalidConfig("rho must be nonnegative and s positive".into()));
        }
        if matches!(self.algorithm, Algorithm::Alg2) && self.rho == 0.0 {
            return Err(Error::InvalidConfig("alg2 requires a positive penalty rho".into()));
        }
        Ok(())
    }
}

/// One row of the convergence history.
#[derive(Clone, Debug)]
pub struct IterationRow {
    pub k: usize,
    pub cpu_seconds: f64,
    /// `||D u - strain_rate||_Q` for the active primal pair.
    pub grad_residual: f64,
    /// Dual objective `F(tau)`.
    pub dual_objective: f64,
    /// Primal objective `b + j - <f, u>`.
    pub primal_objective: f64,
    /// Lipschitz estimate in effect (`rho` for ALG2).
    pub lipschitz: f64,
    /// Whether the gradient restart criterion fired on this iteration.
    pub restarted: bool,
    pub error_vs_reference: Option<f64>,
    /// Backtracking audit: slack of the descent inequality at acceptance.
    pub descent_slack: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ConvergenceRecord {
    pub rows: Vec<IterationRow>,
}

impl ConvergenceRecord {
    pub fn final_residual(&self) -> Option<f64> {
        self.rows.last().map(|r| r.grad_residual)
    }

    pub fn restart_count(&self) -> usize {
        self.rows.iter().filter(|r| r.restarted).count()
    }

    /// Least-squares slope of `log value` against `log k` over `k_range`;
    /// rows with nonpositive or missing values are skipped.
    pub fn log_log_slope(
        &self,
        k_range: std::ops::RangeInclusive<usize>,
        mut value: impl FnMut(&IterationRow) -> Option<f64>,
    ) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| k_range.contains(&r.k))
            .filter_map(|r| value(r).filter(|v| *v > 0.0).map(|v| ((r.k as f64).ln(), v.ln())))
            .collect();
        fit_slope(&pts)
    }
}

/// Least-squares slope of y against x.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Everything a solver run needs, assembled once per mesh.
pub struct Problem<'a> {
    pub fine: &'a FineMesh,
    pub ops: &'a Arc<DiscreteOperators>,
    pub kernel: &'a StokesKernel,
    pub model: &'a ConstitutiveModel,
    /// Assembled body-force load vector.
    pub load: &'a [f64],
    /// Dirichlet velocity values, aligned with the operators' constrained set.
    pub dirichlet_values: &'a [[f64; 2]],
    /// Reference velocity for per-iteration error reporting.
    pub reference: Option<&'a VelocityField>,
}

/// Initial iterates carried over from a previous mesh in the adaptive loop.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    pub stress: Option<TensorField>,
    pub strain_rate: Option<TensorField>,
    pub pressure: Option<PressureField>,
}

/// Converged (or capped) solver output.
#[derive(Clone, Debug)]
pub struct Solution {
    pub converged: bool,
    pub iterations: usize,
    pub velocity: VelocityField,
    pub strain_rate: TensorField,
    pub stress: TensorField,
    pub pressure: PressureField,
    pub record: ConvergenceRecord,
}

/// Per-iteration state handed to an inspector callback.
pub struct IterationView<'a> {
    pub k: usize,
    pub stress: &'a TensorField,
    pub velocity: &'a VelocityField,
    pub strain_rate: &'a TensorField,
    pub pressure: &'a PressureField,
    pub lipschitz: f64,
    /// Point at which the dual gradient was evaluated (leading point for
    /// FISTA*, previous iterate for ISTA*; absent for ALG2).
    pub evaluation_stress: Option<&'a TensorField>,
    /// Dual gradient at the evaluation point.
    pub evaluation_strain_rate: Option<&'a TensorField>,
}

pub type Inspector<'a> = &'a mut dyn FnMut(&IterationView);

/// Max-norm of the discrete momentum residual
/// `D^T M_q tau + B^T p - load` over the free velocity DOFs. Stress iterates
/// of the dual gradient methods satisfy this identity up to Stokes solver
/// precision (membership in the dual constraint set).
pub fn momentum_residual_inf(
    ops: &DiscreteOperators,
    stress: &TensorField,
    pressure: &PressureField,
    load: &[f64],
) -> f64 {
    let dt = ops.apply_dt_mq(stress);
    let bt = ops.apply_bt(&pressure.values);
    ops.free_dofs.iter().map(|&dof| (dt[dof] + bt[dof] - load[dof]).abs()).fold(0.0, f64::max)
}

pub fn fista_star(problem: &Problem, config: &SolverConfig) -> Result<Solution> {
    fista_star_with(problem, config, WarmStart::default(), None)
}

pub fn fista_star_with(
    problem: &Problem,
    config: &SolverConfig,
    warm: WarmStart,
    inspector: Option<Inspector>,
) -> Result<Solution> {
    expect_algorithm(config, Algorithm::FistaStar)?;
    dual_gradient_driver(problem, config, warm, inspector, true)
}

pub fn ista_star(problem: &Problem, config: &SolverConfig) -> Result<Solution> {
    ista_star_with(problem, config, WarmStart::default(), None)
}

pub fn ista_star_with(
    problem: &Problem,
    config: &SolverConfig,
    warm: WarmStart,
    inspector: Option<Inspector>,
) -> Result<Solution> {
    expect_algorithm(config, Algorithm::IstaStar)?;
    dual_gradient_driver(problem, config, warm, inspector, false)
}

pub fn alg2(problem: &Problem, config: &SolverConfig) -> Result<Solution> {
    alg2_with(problem, config, WarmStart::default(), None)
}

/// Dispatches on `config.algorithm`.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<Solution> {
    solve_with(problem, config, WarmStart::default(), None)
}

pub fn solve_with(
    problem: &Problem,
    config: &SolverConfig,
    warm: WarmStart,
    inspector: Option<Inspector>,
) -> Result<Solution> {
    match config.algorithm {
        Algorithm::FistaStar => dual_gradient_driver(problem, config, warm, inspector, true),
        Algorithm::IstaStar => dual_gradient_driver(problem, config, warm, inspector, false),
        Algorithm::Alg2 => alg2_with(problem, config, warm, inspector),
    }
}

fn expect_algorithm(config: &SolverConfig, wanted: Algorithm) -> Result<()> {
    if config.algorithm != wanted {
        return Err(Error::InvalidConfig(format!(
            "config selects {} but {} was invoked",
            config.algorithm.name(),
            wanted.name()
        )));
    }
    Ok(())
}

/// Shared core of FISTA* (`accelerate = true`) and ISTA*: with the
/// extrapolation coefficient identically zero the two iterations coincide.
fn dual_gradient_driver(
    problem: &Problem,
    config: &SolverConfig,
    warm: WarmStart,
    mut inspector: Option<Inspector>,
    accelerate: bool,
) -> Result<Solution> {
    config.validate()?;
    let (fine, ops, model) = (problem.fine, &**problem.ops, problem.model);
    let kernel = problem.kernel;
    let r_exp = model.r;

    let mut tau = warm.stress.unwrap_or_else(|| TensorField::zeros(fine));
    let mut tau_hat = tau.clone();
    let mut t: f64 = 1.0;
    // Fixed 1/2 for Bingham/Casson; otherwise the backtracking trial value,
    // non-decreasing across iterations.
    let mut lipschitz = model.lipschitz().unwrap_or(config.l0);
    let mut pressure = warm.pressure.unwrap_or_else(|| zero_pressure(ops));
    let mut pressure_primal = pressure.clone();
    let zero_load = matches!(config.primal_mode, PrimalMode::LeastSquares)
        .then(|| vec![0.0; ops.n_velocity_dofs]);

    let mut rows = Vec::new();
    for k in 1..=config.max_iterations {
        let started = Instant::now();
        let eval = if accelerate { &tau_hat } else { &tau };
        let gamma_hat = model.dual_gradient(eval);

        // Stokes step, with backtracking when no Lipschitz constant exists.
        let mut descent_slack = None;
        let (u_hat, tau_new) = if let Some(l) = model.lipschitz() {
            lipschitz = l;
            let t_rhs = TensorField::lin_comb(1.0 / l, &gamma_hat, -1.0, eval);
            let (u, p, _) = kernel.solve(
                1.0 / l,
                Some(&t_rhs),
                problem.load,
                problem.dirichlet_values,
                Some(&pressure),
                config.stokes_tol,
                r_exp,
            )?;
            pressure = p;
            let du = ops.apply_d(&u);
            let step = TensorField::lin_comb(1.0, &du, -1.0, &gamma_hat);
            (u, TensorField::lin_comb(1.0, eval, 1.0 / l, &step))
        } else {
            let f_eval = model.dual_potential(fine, eval)?;
            let mut magnifications = 0;
            loop {
                let l = lipschitz;
                let t_rhs = TensorField::lin_comb(1.0 / l, &gamma_hat, -1.0, eval);
                let (u, p, _) = kernel.solve(
                    1.0 / l,
                    Some(&t_rhs),
                    problem.load,
                    problem.dirichlet_values,
                    Some(&pressure),
                    config.stokes_tol,
                    r_exp,
                )?;
                let du = ops.apply_d(&u);
                let step = TensorField::lin_comb(1.0, &du, -1.0, &gamma_hat);
                let candidate = TensorField::lin_comb(1.0, eval, 1.0 / l, &step);
                let diff = TensorField::lin_comb(1.0, &candidate, -1.0, eval);
                let slack = f_eval + inner_q(fine, &gamma_hat, &diff)?
                    + 0.5 * l * inner_q(fine, &diff, &diff)?
                    - model.dual_potential(fine, &candidate)?;
                if slack >= -1e-12 * f_eval.abs().max(1.0) {
                    pressure = p;
                    descent_slack = Some(slack);
                    break (u, candidate);
                }
                magnifications += 1;
                if magnifications > BACKTRACK_MAX_MAGNIFICATIONS {
                    return Err(Error::BacktrackOverflow { magnifications, lipschitz });
                }
                lipschitz *= config.eta;
            }
        };

        let du_hat = ops.apply_d(&u_hat);
        let hat_residual = TensorField::lin_comb(1.0, &du_hat, -1.0, &gamma_hat);

        // Primal pair. ISTA* has no leading point, so the pair is the one
        // just computed; the guaranteed-rate modes re-evaluate at the stress
        // iterate.
        let (u_k, gamma_k) = if !accelerate {
            (u_hat, gamma_hat.clone())
        } else {
            match config.primal_mode {
                PrimalMode::LeadingPoint => (u_hat, gamma_hat.clone()),
                PrimalMode::Prox => {
                    let gamma = model.dual_gradient(&tau_new);
                    let t_rhs = TensorField::lin_comb(1.0 / lipschitz, &gamma, -1.0, &tau_new);
                    let (u, p, _) = kernel.solve(
                        1.0 / lipschitz,
                        Some(&t_rhs),
                        problem.load,
                        problem.dirichlet_values,
                        Some(&pressure_primal),
                        config.stokes_tol,
                        r_exp,
                    )?;
                    pressure_primal = p;
                    (u, gamma)
                }
                PrimalMode::LeastSquares => {
                    let gamma = model.dual_gradient(&tau_new);
                    let (u, p, _) = kernel.solve(
                        1.0,
                        Some(&gamma),
                        zero_load.as_deref().expect("allocated for least-squares mode"),
                        problem.dirichlet_values,
                        Some(&pressure_primal),
                        config.stokes_tol,
                        r_exp,
                    )?;
                    pressure_primal = p;
                    (u, gamma)
                }
            }
        };

        let du_k = ops.apply_d(&u_k);
        let residual_field = TensorField::lin_comb(1.0, &du_k, -1.0, &gamma_k);
        let grad_residual = norm_q(fine, &residual_field, r_exp)?;

        // Gradient-scheme restart: fires when the last dual step forms an
        // obtuse angle with the leading-point residual.
        let mut restarted = false;
        if accelerate && config.restart {
            let step = TensorField::lin_comb(1.0, &tau_new, -1.0, &tau);
            if inner_q(fine, &hat_residual, &step)? < 0.0 {
                restarted = true;
            }
        }

        rows.push(IterationRow {
            k,
            cpu_seconds: started.elapsed().as_secs_f64(),
            grad_residual,
            dual_objective: model.dual_potential(fine, &tau_new)?,
            primal_objective: model.primal_energy(fine, &u_k, &gamma_k, problem.load)?,
            lipschitz,
            restarted,
            error_vs_reference: reference_error(problem, &u_k, r_exp)?,
            descent_slack,
        });
        if let Some(ref mut hook) = inspector {
            hook(&IterationView {
                k,
                stress: &tau_new,
                velocity: &u_k,
                strain_rate: &gamma_k,
                pressure: &pressure,
                lipschitz,
                evaluation_stress: Some(eval),
                evaluation_strain_rate: Some(&gamma_hat),
            });
        }

        if grad_residual <= config.grad_tol || k == config.max_iterations {
            return Ok(Solution {
                converged: grad_residual <= config.grad_tol,
                iterations: k,
                velocity: u_k,
                strain_rate: gamma_k,
                stress: tau_new,
                pressure,
                record: ConvergenceRecord { rows },
            });
        }

        if accelerate {
            if restarted {
                // discard momentum: the next step is a plain ISTA* step
                t = 1.0;
                tau_hat = tau_new.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let coeff = (t - 1.0) / t_next;
                let momentum = TensorField::lin_comb(1.0, &tau_new, -1.0, &tau);
                tau_hat = TensorField::lin_comb(1.0, &tau_new, coeff, &momentum);
                t = t_next;
            }
        }
        tau = tau_new;
    }
    unreachable!("loop returns at the iteration cap")
}

pub fn alg2_with(
    problem: &Problem,
    config: &SolverConfig,
    warm: WarmStart,
    mut inspector: Option<Inspector>,
) -> Result<Solution> {
    expect_algorithm(config, Algorithm::Alg2)?;
    config.validate()?;
    let (fine, ops, model) = (problem.fine, &**problem.ops, problem.model);
    let (rho, s) = (config.rho, config.s);
    let r_exp = model.r;

    let mut tau = warm.stress.unwrap_or_else(|| TensorField::zeros(fine));
    let mut gamma = warm.strain_rate.unwrap_or_else(|| TensorField::zeros(fine));
    let mut pressure = warm.pressure.unwrap_or_else(|| zero_pressure(ops));

    let mut rows = Vec::new();
    for k in 1..=config.max_iterations {
        let started = Instant::now();
        // velocity step: scale rho, tensor right-hand side rho * gamma - tau
        let t_rhs = TensorField::lin_comb(rho, &gamma, -1.0, &tau);
        let (u, p, _) = problem.kernel.solve(
            rho,
            Some(&t_rhs),
            problem.load,
            problem.dirichlet_values,
            Some(&pressure),
            config.stokes_tol,
            r_exp,
        )?;
        pressure = p;
        let du = ops.apply_d(&u);
        // strain-rate step: pointwise augmented prox at the old multiplier
        let gamma_new = model.prox_alg2(&tau, &du, rho)?;
        // multiplier ascent
        let residual_field = TensorField::lin_comb(1.0, &du, -1.0, &gamma_new);
        let tau_new = TensorField::lin_comb(1.0, &tau, s, &residual_field);
        let grad_residual = norm_q(fine, &residual_field, r_exp)?;

        rows.push(IterationRow {
            k,
            cpu_seconds: started.elapsed().as_secs_f64(),
            grad_residual,
            dual_objective: model.dual_potential(fine, &tau_new)?,
            primal_objective: model.primal_energy(fine, &u, &gamma_new, problem.load)?,
            lipschitz: rho,
            restarted: false,
            error_vs_reference: reference_error(problem, &u, r_exp)?,
            descent_slack: None,
        });
        if let Some(ref mut hook) = inspector {
            hook(&IterationView {
                k,
                stress: &tau_new,
                velocity: &u,
                strain_rate: &gamma_new,
                pressure: &pressure,
                lipschitz: rho,
                evaluation_stress: None,
                evaluation_strain_rate: None,
            });
        }

        let done = grad_residual <= config.grad_tol;
        if done || k == config.max_iterations {
            return Ok(Solution {
                converged: done,
                iterations: k,
                velocity: u,
                strain_rate: gamma_new,
                stress: tau_new,
                pressure,
                record: ConvergenceRecord { rows },
            });
        }
        tau = tau_new;
        gamma = gamma_new;
    }
    unreachable!("loop returns at the iteration cap")
}

fn reference_error(problem: &Problem, u: &VelocityField, r_exp: f64) -> Result<Option<f64>> {
    problem
        .reference
        .map(|reference| crate::fem::error_norm_u(problem.fine, u, reference, r_exp))
        .transpose()
}

fn zero_pressure(ops: &DiscreteOperators) -> PressureField {
    PressureField::from_values(vec![0.0; ops.n_pressure_dofs], ops.coarse_stamp())
}
