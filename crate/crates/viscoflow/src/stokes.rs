//! Stokes saddle-point solves by the preconditioned conjugate gradient Uzawa
//! method.
//!
//! The velocity stiffness block `K = D^T M_q D` (Dirichlet rows eliminated) is
//! factorized once per mesh and reused across all outer optimisation
//! iterations; the viscosity scale multiplies outside the factorization. The
//! CG iteration runs on the pressure Schur complement `S = B K^{-1} B^T /
//! scale` with the coarse pressure mass matrix as preconditioner and an exact
//! line search.
//!
//! Termination measures the dual gradient of the Uzawa functional: the
//! discrete divergence `pi_h(div u)` (the L2 projection of `div u` onto the
//! coarse pressure space, i.e. `M_p^{-1} B u`), in the `L^r` norm. The
//! velocity pair controls the divergence only weakly, so the pointwise
//! `||div u||` has an O(h) discretisation floor; the projected quantity is
//! the one the iteration drives to the requested tolerance.

use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};

use crate::fem::{DiscreteOperators, PressureField, TensorField, VelocityField};
use crate::{Error, Result};

/// Outcome of one PCGU solve.
#[derive(Clone, Debug)]
pub struct StokesReport {
    /// Uzawa CG iterations on the pressure Schur complement.
    pub outer_iterations: usize,
    /// `||pi_h(div u)||_{L^r}` at termination (discrete divergence).
    pub final_div_norm: f64,
    /// Triangular solves with the factorized stiffness block.
    pub inner_solve_count: usize,
}

/// Reusable factorization of the constrained velocity stiffness block plus
/// the pressure mass preconditioner.
pub struct StokesKernel {
    ops: Arc<DiscreteOperators>,
    stiffness: Llt<usize, f64>,
    mass: Llt<usize, f64>,
}

fn cholesky(
    n: usize,
    triplets: &[(usize, usize, f64)],
    what: &str,
) -> Result<Llt<usize, f64>> {
    let trip: Vec<Triplet<usize, usize, f64>> =
        triplets.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Factorization(format!("{what}: invalid triplets: {e:?}")))?;
    mat.sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Factorization(format!("{what} is not positive definite: {e:?}")))
}

/// Factorizes the stiffness block on the free velocity DOFs.
pub fn factorize(ops: &Arc<DiscreteOperators>) -> Result<StokesKernel> {
    if ops.n_free_dofs() == 0 {
        return Err(Error::Factorization("no free velocity DOFs (every vertex is constrained)".into()));
    }
    let stiffness = cholesky(ops.n_free_dofs(), &ops.kff_triplets(), "velocity stiffness block")?;
    let mass = cholesky(ops.n_pressure_dofs, &ops.pressure_mass, "pressure mass matrix")?;
    Ok(StokesKernel { ops: Arc::clone(ops), stiffness, mass })
}

impl StokesKernel {
    pub fn ops(&self) -> &Arc<DiscreteOperators> {
        &self.ops
    }

    pub fn n_free_dofs(&self) -> usize {
        self.ops.n_free_dofs()
    }

    fn solve_stiffness(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        self.stiffness.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
    }

    fn solve_mass(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        self.mass.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
    }

    /// Solves the Stokes problem
    /// `scale * K u + B^T p = load + D^T M_q tensor_rhs`, `int q div u = 0`,
    /// with Dirichlet values `u_dirichlet` (aligned with the operator's
    /// constrained vertex list) and pressure warm start `p_warm`.
    ///
    /// Terminates when `||pi_h(div u)||_{L^r} <= tol` with `r = div_exponent`;
    /// exceeding `10 x (pressure DOFs)` CG iterations is a hard error.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &self,
        scale: f64,
        tensor_rhs: Option<&TensorField>,
        load: &[f64],
        u_dirichlet: &[[f64; 2]],
        p_warm: Option<&PressureField>,
        tol: f64,
        div_exponent: f64,
    ) -> Result<(VelocityField, PressureField, StokesReport)> {
        let ops = &*self.ops;
        if !(scale > 0.0) {
            return Err(Error::InvalidConfig(format!("stokes viscosity scale must be positive, got {scale}")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidConfig(format!("stokes tolerance must be positive, got {tol}")));
        }
        if u_dirichlet.len() != ops.dirichlet_vertices.len() {
            return Err(Error::InvalidConfig("dirichlet value list does not match the constrained vertex set".into()));
        }

        // Full-space right-hand side: body load plus the tensor divergence term.
        let mut rhs = load.to_vec();
        if let Some(t) = tensor_rhs {
            for (r, v) in rhs.iter_mut().zip(ops.apply_dt_mq(t)) {
                *r += v;
            }
        }

        // Dirichlet lifting.
        let mut u = vec![0.0; ops.n_velocity_dofs];
        for (&v, val) in ops.dirichlet_vertices.iter().zip(u_dirichlet) {
            u[2 * v] = val[0];
            u[2 * v + 1] = val[1];
        }
        let k_lift = ops.apply_k(&u);
        let g_f: Vec<f64> =
            ops.free_dofs.iter().map(|&dof| rhs[dof] - scale * k_lift[dof]).collect();

        let mut p = match p_warm {
            Some(field) => field.values.clone(),
            None => vec![0.0; ops.n_pressure_dofs],
        };
        ops.project_zero_mean(&mut p);

        let mut inner_solves = 0;
        let set_velocity = |u: &mut Vec<f64>, p: &[f64], inner: &mut usize| {
            let bt = ops.apply_bt(p);
            let mut rhs_f: Vec<f64> = ops
                .free_dofs
                .iter()
                .enumerate()
                .map(|(fi, &dof)| g_f[fi] - bt[dof])
                .collect();
            self.solve_stiffness(&mut rhs_f);
            *inner += 1;
            for (fi, &dof) in ops.free_dofs.iter().enumerate() {
                u[dof] = rhs_f[fi] / scale;
            }
        };
        set_velocity(&mut u, &p, &mut inner_solves);

        // Preconditioned residual z = M_p^{-1} B u is (minus) the discrete
        // divergence; its L^r norm is the termination quantity.
        let precondition = |r: &[f64]| {
            let mut z = r.to_vec();
            self.solve_mass(&mut z);
            ops.project_zero_mean(&mut z);
            z
        };

        let mut r = ops.apply_b(&u);
        let mut z = precondition(&r);
        let mut div_norm = ops.pressure_lr_norm(&z, div_exponent);
        let cap = 10 * ops.n_pressure_dofs;
        let mut iterations = 0;

        if div_norm > tol {
            let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let mut d = z;
            loop {
                iterations += 1;
                if iterations > cap || rz <= 0.0 {
                    return Err(Error::StokesStalled {
                        tol,
                        report: StokesReport {
                            outer_iterations: iterations - 1,
                            final_div_norm: div_norm,
                            inner_solve_count: inner_solves,
                        },
                    });
                }
                // Schur complement application: one stiffness solve.
                let btd = ops.apply_bt(&d);
                let mut v: Vec<f64> = ops.free_dofs.iter().map(|&dof| btd[dof]).collect();
                self.solve_stiffness(&mut v);
                inner_solves += 1;
                let mut v_full = vec![0.0; ops.n_velocity_dofs];
                for (fi, &dof) in ops.free_dofs.iter().enumerate() {
                    v_full[dof] = v[fi];
                }
                let w: Vec<f64> = ops.apply_b(&v_full).iter().map(|b| b / scale).collect();

                let dw: f64 = d.iter().zip(&w).map(|(a, b)| a * b).sum();
                if dw <= 0.0 {
                    return Err(Error::CgBreakdown(dw));
                }
                let alpha = rz / dw;
                for (pi, di) in p.iter_mut().zip(&d) {
                    *pi += alpha * di;
                }
                for (fi, &dof) in ops.free_dofs.iter().enumerate() {
                    u[dof] -= alpha / scale * v[fi];
                }
                for (ri, wi) in r.iter_mut().zip(&w) {
                    *ri -= alpha * wi;
                }
                z = precondition(&r);
                div_norm = ops.pressure_lr_norm(&z, div_exponent);
                if div_norm <= tol {
                    break;
                }
                let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                d = z.iter().zip(&d).map(|(zi, di)| zi + beta * di).collect();
            }
        }

        ops.project_zero_mean(&mut p);
        let report = StokesReport {
            outer_iterations: iterations,
            final_div_norm: div_norm,
            inner_solve_count: inner_solves,
        };
        Ok((
            VelocityField::from_values(u, ops.fine_stamp()),
            PressureField::from_values(p, ops.coarse_stamp()),
            report,
        ))
    }
}
