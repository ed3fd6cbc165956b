//! Bingham, Casson and Herschel-Bulkley constitutive models.
//!
//! Everything here is expressed in the non-dimensional variables: the Bingham
//! number `Bi` and, for Herschel-Bulkley, the shear-thinning exponent
//! `1 < r < 2` with dual exponent `r* = r / (r - 1)`. The dual potential `F`
//! and its gradient act elementwise on the stress magnitude; the positive part
//! is computed without smoothing.

use serde::{Deserialize, Serialize};

use crate::fem::{inner_q, TensorField, VelocityField};
use crate::mesh::FineMesh;
use crate::{Error, Result};

pub const PROX_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bingham,
    Casson,
    HerschelBulkley,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstitutiveModel {
    pub kind: ModelKind,
    /// Bingham number (non-dimensional yield stress).
    pub bi: f64,
    /// Integrability exponent: 2 for Bingham/Casson, the shear-thinning
    /// exponent for Herschel-Bulkley.
    pub r: f64,
    /// Dual exponent, `1/r + 1/r* = 1`.
    pub r_star: f64,
}

impl ConstitutiveModel {
    pub fn bingham(bi: f64) -> Result<Self> {
        Self::validate_bi(bi)?;
        Ok(ConstitutiveModel { kind: ModelKind::Bingham, bi, r: 2.0, r_star: 2.0 })
    }

    pub fn casson(bi: f64) -> Result<Self> {
        Self::validate_bi(bi)?;
        Ok(ConstitutiveModel { kind: ModelKind::Casson, bi, r: 2.0, r_star: 2.0 })
    }

    pub fn herschel_bulkley(bi: f64, r: f64) -> Result<Self> {
        Self::validate_bi(bi)?;
        if !(1.0 < r && r < 2.0) {
            return Err(Error::InvalidScenario(format!(
                "Herschel-Bulkley exponent must satisfy 1 < r < 2, got {r}"
            )));
        }
        Ok(ConstitutiveModel { kind: ModelKind::HerschelBulkley, bi, r, r_star: r / (r - 1.0) })
    }

    pub fn new(kind: ModelKind, bi: f64, r: f64) -> Result<Self> {
        match kind {
            ModelKind::Bingham => Self::bingham(bi),
            ModelKind::Casson => Self::casson(bi),
            ModelKind::HerschelBulkley => Self::herschel_bulkley(bi, r),
        }
    }

    fn validate_bi(bi: f64) -> Result<()> {
        if !(bi >= 0.0 && bi.is_finite()) {
            return Err(Error::InvalidScenario(format!("Bingham number must be >= 0, got {bi}")));
        }
        Ok(())
    }

    /// Global Lipschitz constant of the dual gradient, when one exists.
    ///
    /// `1/2` for Bingham and Casson; none for Herschel-Bulkley (`r* > 2`), in
    /// which case the caller must backtrack.
    pub fn lipschitz(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Bingham | ModelKind::Casson => Some(0.5),
            ModelKind::HerschelBulkley => None,
        }
    }

    /// Dual potential density as a function of the stress magnitude.
    fn potential_density(&self, s: f64) -> f64 {
        let bi = self.bi;
        match self.kind {
            ModelKind::Bingham => 0.25 * (s - bi).max(0.0).powi(2),
            ModelKind::Casson => {
                let d = (s.sqrt() - bi.sqrt()).max(0.0);
                0.25 * d.powi(3) * (s.sqrt() + bi.sqrt() / 3.0)
            }
            ModelKind::HerschelBulkley => {
                (s - bi).max(0.0).powf(self.r_star) / (2.0 * self.r_star)
            }
        }
    }

    /// Magnitude of the dual gradient as a function of the stress magnitude.
    fn gradient_magnitude(&self, s: f64) -> f64 {
        let bi = self.bi;
        match self.kind {
            ModelKind::Bingham => 0.5 * (s - bi).max(0.0),
            ModelKind::Casson => 0.5 * (s.sqrt() - bi.sqrt()).max(0.0).powi(2),
            ModelKind::HerschelBulkley => 0.5 * (s - bi).max(0.0).powf(self.r_star - 1.0),
        }
    }

    /// Viscous dissipation density as a function of the strain-rate magnitude.
    fn b_density(&self, m: f64) -> f64 {
        match self.kind {
            ModelKind::Bingham => m * m,
            ModelKind::Casson => m * m + 4.0 * (2.0 * self.bi).sqrt() / 3.0 * m.powf(1.5),
            ModelKind::HerschelBulkley => 2.0f64.powf(self.r - 1.0) / self.r * m.powf(self.r),
        }
    }

    /// Stress magnitude of the forward constitutive law at strain-rate
    /// magnitude `m > 0`.
    fn stress_magnitude(&self, m: f64) -> f64 {
        let bi = self.bi;
        match self.kind {
            ModelKind::Bingham => 2.0 * m + bi,
            ModelKind::Casson => ((2.0 * m).sqrt() + bi.sqrt()).powi(2),
            ModelKind::HerschelBulkley => 2.0f64.powf(self.r - 1.0) * m.powf(self.r - 1.0) + bi,
        }
    }

    /// Dual potential `F(tau) = sum_e area_e phi(|tau|_e)`.
    pub fn dual_potential(&self, fine: &FineMesh, tau: &TensorField) -> Result<f64> {
        if tau.stamp() != fine.stamp() {
            return Err(Error::MeshMismatch("stress field does not live on the given mesh".into()));
        }
        let mut acc = 0.0;
        for e in 0..tau.len() {
            acc += fine.triangle_area(e) * self.potential_density(tau.magnitude(e));
        }
        Ok(acc)
    }

    /// Dual gradient `grad F(tau)`, elementwise; this is the strain rate the
    /// constitutive law associates with the stress `tau`. Elements with
    /// `|tau| <= Bi` (including `tau = 0`) are unyielded and map to zero.
    pub fn dual_gradient(&self, tau: &TensorField) -> TensorField {
        tau.map(|c| {
            let s = (c[0] * c[0] + c[1] * c[1] + 2.0 * c[2] * c[2]).sqrt();
            if s <= self.bi || s == 0.0 {
                return [0.0; 3];
            }
            let scale = self.gradient_magnitude(s) / s;
            [scale * c[0], scale * c[1], scale * c[2]]
        })
    }

    /// Forward constitutive map: the stress produced by a strain rate
    /// (zero strain rate maps to zero, one admissible choice of the
    /// multivalued branch).
    pub fn stress_from_strain_rate(&self, gamma: &TensorField) -> TensorField {
        gamma.map(|c| {
            let m = (c[0] * c[0] + c[1] * c[1] + 2.0 * c[2] * c[2]).sqrt();
            if m == 0.0 {
                return [0.0; 3];
            }
            let scale = self.stress_magnitude(m) / m;
            [scale * c[0], scale * c[1], scale * c[2]]
        })
    }

    /// Pointwise minimiser of the augmented strain-rate problem of ADMM:
    /// per element, `argmin_g b(g) + Bi |g| - tau : g + rho/2 |Du - g|^2`.
    ///
    /// With `rho = 0` this reduces to the dual gradient. For Bingham the
    /// minimiser is closed-form shrinkage; Casson reduces to a quadratic in
    /// `sqrt(m)`; Herschel-Bulkley requires a bracketed Newton solve.
    pub fn prox_alg2(&self, tau: &TensorField, du: &TensorField, rho: f64) -> Result<TensorField> {
        if rho == 0.0 {
            return Ok(self.dual_gradient(tau));
        }
        if tau.stamp() != du.stamp() {
            return Err(Error::MeshMismatch("stress and strain-rate fields live on different meshes".into()));
        }
        let bi = self.bi;
        let mut components = Vec::with_capacity(tau.len());
        for (t, d) in tau.components.iter().zip(&du.components) {
            let w = [t[0] + rho * d[0], t[1] + rho * d[1], t[2] + rho * d[2]];
            let wn = (w[0] * w[0] + w[1] * w[1] + 2.0 * w[2] * w[2]).sqrt();
            if wn <= bi || wn == 0.0 {
                components.push([0.0; 3]);
                continue;
            }
            let excess = wn - bi;
            let m = match self.kind {
                ModelKind::Bingham => excess / (2.0 + rho),
                ModelKind::Casson => {
                    // (2 + rho) m + 2 sqrt(2 Bi) sqrt(m) = excess, quadratic in sqrt(m)
                    let a = 2.0 + rho;
                    let sb = (2.0 * bi).sqrt();
                    let x = (-sb + (2.0 * bi + a * excess).sqrt()) / a;
                    x * x
                }
                ModelKind::HerschelBulkley => self.prox_scalar_hb(excess, rho)?,
            };
            let scale = m / wn;
            components.push([scale * w[0], scale * w[1], scale * w[2]]);
        }
        Ok(TensorField::from_components(components, tau.stamp()))
    }

    /// Solves `2^{r-1} m^{r-1} + rho m = excess` for `m >= 0` by Newton with a
    /// bisection safeguard on the bracket `[0, excess / rho]`.
    fn prox_scalar_hb(&self, excess: f64, rho: f64) -> Result<f64> {
        let c = 2.0f64.powf(self.r - 1.0);
        let e = self.r - 1.0;
        let g = |m: f64| c * m.powf(e) + rho * m - excess;
        let (mut lo, mut hi) = (0.0f64, excess / rho);
        let mut m = hi;
        for _ in 0..PROX_MAX_ITERATIONS {
            let gm = g(m);
            if gm.abs() <= 1e-14 * excess.max(1.0) {
                return Ok(m);
            }
            if gm > 0.0 {
                hi = m;
            } else {
                lo = m;
            }
            let dg = c * e * m.powf(e - 1.0) + rho;
            let newton = m - gm / dg;
            m = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * hi {
                return Ok(m);
            }
        }
        Err(Error::ProxSolve(PROX_MAX_ITERATIONS))
    }

    /// Primal objective `b(gamma) + Bi int |gamma| - <f, u>`.
    pub fn primal_energy(
        &self,
        fine: &FineMesh,
        u: &VelocityField,
        gamma: &TensorField,
        load: &[f64],
    ) -> Result<f64> {
        if gamma.stamp() != fine.stamp() || u.stamp() != fine.stamp() {
            return Err(Error::MeshMismatch("fields do not live on the given mesh".into()));
        }
        let mut acc = 0.0;
        for e in 0..gamma.len() {
            let m = gamma.magnitude(e);
            acc += fine.triangle_area(e) * (self.b_density(m) + self.bi * m);
        }
        let work: f64 = load.iter().zip(&u.values).map(|(f, v)| f * v).sum();
        Ok(acc - work)
    }

    /// Descent inequality of the backtracking line search: checks
    /// `F(tau) <= F(that) + <grad F(that), tau - that>_Q + L/2 ||tau - that||_Q^2`
    /// and returns the slack (nonnegative when the inequality holds).
    pub fn descent_slack(
        &self,
        fine: &FineMesh,
        tau: &TensorField,
        tau_hat: &TensorField,
        grad_hat: &TensorField,
        lipschitz: f64,
    ) -> Result<f64> {
        let diff = TensorField::lin_comb(1.0, tau, -1.0, tau_hat);
        let lhs = self.dual_potential(fine, tau)?;
        let rhs = self.dual_potential(fine, tau_hat)?
            + inner_q(fine, grad_hat, &diff)?
            + 0.5 * lipschitz * inner_q(fine, &diff, &diff)?;
        Ok(rhs - lhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_cavity, refine_midpoints};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fine_mesh(n: usize) -> FineMesh {
        refine_midpoints(&build_structured_cavity(n).unwrap())
    }

    fn all_models() -> Vec<ConstitutiveModel> {
        vec![
            ConstitutiveModel::bingham(10.0 * 2.0f64.sqrt()).unwrap(),
            ConstitutiveModel::casson(5.0).unwrap(),
            ConstitutiveModel::herschel_bulkley(3.0, 1.5).unwrap(),
        ]
    }

    #[test]
    fn model_validation() {
        assert!(ConstitutiveModel::bingham(-1.0).is_err());
        assert!(ConstitutiveModel::herschel_bulkley(1.0, 1.0).is_err());
        assert!(ConstitutiveModel::herschel_bulkley(1.0, 2.0).is_err());
        let hb = ConstitutiveModel::herschel_bulkley(1.0, 1.5).unwrap();
        assert_relative_eq!(hb.r_star, 3.0);
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(ConstitutiveModel::bingham(1.0).unwrap().lipschitz(), Some(0.5));
        assert_eq!(ConstitutiveModel::casson(1.0).unwrap().lipschitz(), Some(0.5));
        assert_eq!(ConstitutiveModel::herschel_bulkley(1.0, 1.5).unwrap().lipschitz(), None);
    }

    #[test]
    fn potential_vanishes_below_yield() {
        let fine = fine_mesh(2);
        for model in all_models() {
            let tau = TensorField::constant(&fine, [0.5 * model.bi, 0.0, 0.0]);
            assert_eq!(model.dual_potential(&fine, &tau).unwrap(), 0.0);
            let g = model.dual_gradient(&tau);
            assert!(g.components.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn potential_hand_values() {
        let fine = fine_mesh(2);
        // Bingham, |tau| = Bi + 2 on the unit domain: 1/4 * 2^2 = 1
        let bingham = ConstitutiveModel::bingham(7.0).unwrap();
        let tau = TensorField::constant(&fine, [9.0, 0.0, 0.0]);
        assert_relative_eq!(bingham.dual_potential(&fine, &tau).unwrap(), 1.0, max_relative = 1e-13);

        // Herschel-Bulkley r = 1.5 (r* = 3), |tau| = Bi + 1: 1/(2*3) * 1^3 = 1/6
        let hb = ConstitutiveModel::herschel_bulkley(2.0, 1.5).unwrap();
        let tau = TensorField::constant(&fine, [3.0, 0.0, 0.0]);
        assert_relative_eq!(hb.dual_potential(&fine, &tau).unwrap(), 1.0 / 6.0, max_relative = 1e-13);
    }

    #[test]
    fn bingham_gradient_hand_value() {
        // tau = (2 Bi, 0, 0): |tau| = 2 Bi, gamma = 1/2 (|tau| - Bi) tau/|tau| = (Bi/2, 0, 0)
        let bi = 6.0;
        let fine = fine_mesh(1);
        let model = ConstitutiveModel::bingham(bi).unwrap();
        let tau = TensorField::constant(&fine, [2.0 * bi, 0.0, 0.0]);
        let g = model.dual_gradient(&tau);
        for c in &g.components {
            assert_relative_eq!(c[0], bi / 2.0, max_relative = 1e-14);
            assert_eq!(c[1], 0.0);
            assert_eq!(c[2], 0.0);
        }
        // consistency with the forward law: tau(gamma) recovers (2 Bi, 0, 0)
        let back = model.stress_from_strain_rate(&g);
        for c in &back.components {
            assert_relative_eq!(c[0], 2.0 * bi, max_relative = 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // central differences of F against grad F, away from the kink;
        // off-diagonal derivative carries the metric factor 2
        let fine = fine_mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for model in all_models() {
            let delta = 1e-3 * model.bi;
            let mut checked = 0;
            while checked < 60 {
                let c: [f64; 3] = [
                    rng.random_range(-2.0..2.0) * model.bi,
                    rng.random_range(-2.0..2.0) * model.bi,
                    rng.random_range(-2.0..2.0) * model.bi,
                ];
                let s = (c[0] * c[0] + c[1] * c[1] + 2.0 * c[2] * c[2]).sqrt();
                if (s - model.bi).abs() <= delta || s < 1e-6 {
                    continue;
                }
                checked += 1;
                let h = 1e-6 * s.max(1.0);
                let grad = model.dual_gradient(&TensorField::constant(&fine, c));
                let g = grad.components[0];
                for k in 0..3 {
                    let mut up = c;
                    let mut dn = c;
                    up[k] += h;
                    dn[k] -= h;
                    let fu = model.dual_potential(&fine, &TensorField::constant(&fine, up)).unwrap();
                    let fd = model.dual_potential(&fine, &TensorField::constant(&fine, dn)).unwrap();
                    let fd_grad = (fu - fd) / (2.0 * h);
                    let metric = if k == 2 { 2.0 } else { 1.0 };
                    let expected = metric * g[k];
                    let scale = expected.abs().max(1e-8);
                    assert!(
                        (fd_grad - expected).abs() / scale <= 1e-6,
                        "{:?} component {k}: fd {fd_grad:e} vs grad {expected:e}",
                        model.kind
                    );
                }
            }
        }
    }

    #[test]
    fn round_trip_recovers_strain_rate() {
        // forward law followed by the dual gradient is the identity
        let fine = fine_mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in all_models() {
            for _ in 0..1000 {
                let g: [f64; 3] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
                let m = (g[0] * g[0] + g[1] * g[1] + 2.0 * g[2] * g[2]).sqrt();
                if m < 1e-8 {
                    continue;
                }
                let gamma = TensorField::constant(&fine, g);
                let tau = model.stress_from_strain_rate(&gamma);
                let back = model.dual_gradient(&tau);
                for k in 0..3 {
                    let err = (back.components[0][k] - g[k]).abs() / m;
                    assert!(err <= 1e-10, "{:?}: {err:e}", model.kind);
                }
            }
        }
    }

    #[test]
    fn nonexpansive_gradient_bingham_casson() {
        let fine = fine_mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for model in [ConstitutiveModel::bingham(4.0).unwrap(), ConstitutiveModel::casson(4.0).unwrap()] {
            for _ in 0..1000 {
                let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
                let b: [f64; 3] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
                let ta = TensorField::constant(&fine, a);
                let tb = TensorField::constant(&fine, b);
                let ga = model.dual_gradient(&ta);
                let gb = model.dual_gradient(&tb);
                let dg = TensorField::lin_comb(1.0, &ga, -1.0, &gb);
                let dt = TensorField::lin_comb(1.0, &ta, -1.0, &tb);
                let ng = inner_q(&fine, &dg, &dg).unwrap().sqrt();
                let nt = inner_q(&fine, &dt, &dt).unwrap().sqrt();
                assert!(ng <= 0.5 * nt + 1e-12, "{:?}: {ng} > 0.5 * {nt}", model.kind);
            }
        }
    }

    #[test]
    fn gradient_magnitude_monotone_along_rays() {
        let dir = {
            let raw: [f64; 3] = [0.6, -0.3, 0.4];
            let n = (raw[0] * raw[0] + raw[1] * raw[1] + 2.0 * raw[2] * raw[2]).sqrt();
            [raw[0] / n, raw[1] / n, raw[2] / n]
        };
        for model in all_models() {
            let mut prev = 0.0;
            for step in 0..200 {
                let s = 0.05 * step as f64 * (model.bi + 1.0);
                let mag = model.gradient_magnitude(s);
                assert!(mag >= prev - 1e-15, "{:?} not monotone at s = {s}", model.kind);
                prev = mag;
                // the elementwise gradient magnitude equals c(s)
                let c = [s * dir[0], s * dir[1], s * dir[2]];
                let fine = fine_mesh(1);
                let g = model.dual_gradient(&TensorField::constant(&fine, c));
                assert_relative_eq!(g.magnitude(0), mag, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn prox_reduces_to_dual_gradient_at_zero_penalty() {
        let fine = fine_mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in all_models() {
            let tau = TensorField::from_components(
                (0..fine.n_triangles())
                    .map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0) * model.bi))
                    .collect(),
                fine.stamp(),
            );
            let du = TensorField::zeros(&fine);
            let prox = model.prox_alg2(&tau, &du, 0.0).unwrap();
            let grad = model.dual_gradient(&tau);
            for (a, b) in prox.components.iter().zip(&grad.components) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() <= 1e-14 * b[k].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn prox_bingham_hand_value() {
        // Bi = 10, rho = 2, w = (14, 0, 0): m = (14 - 10)/(2 + 2) = 1
        let fine = fine_mesh(1);
        let model = ConstitutiveModel::bingham(10.0).unwrap();
        let tau = TensorField::constant(&fine, [14.0, 0.0, 0.0]);
        let du = TensorField::zeros(&fine);
        let g = model.prox_alg2(&tau, &du, 2.0).unwrap();
        for c in &g.components {
            assert_relative_eq!(c[0], 1.0, max_relative = 1e-14);
            assert_eq!(c[1], 0.0);
            assert_eq!(c[2], 0.0);
        }
        // below the threshold the prox returns zero
        let tau = TensorField::constant(&fine, [6.0, 0.0, 0.0]);
        let g = model.prox_alg2(&tau, &du, 2.0).unwrap();
        assert!(g.components.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn prox_beats_brute_force_scan() {
        // pointwise objective value at the returned minimiser vs a 1e4-point
        // scan of the reduced 1D objective along the w-direction
        let fine = fine_mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for model in all_models() {
            for _ in 0..40 {
                let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-3.0..3.0) * model.bi.max(1.0));
                let d: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
                let rho = rng.random_range(0.1..5.0);
                let tau = TensorField::constant(&fine, t);
                let du = TensorField::constant(&fine, d);
                let g = model.prox_alg2(&tau, &du, rho).unwrap();

                let w = [t[0] + rho * d[0], t[1] + rho * d[1], t[2] + rho * d[2]];
                let wn = (w[0] * w[0] + w[1] * w[1] + 2.0 * w[2] * w[2]).sqrt();
                let objective = |c: [f64; 3]| {
                    let m = (c[0] * c[0] + c[1] * c[1] + 2.0 * c[2] * c[2]).sqrt();
                    let dot = t[0] * c[0] + t[1] * c[1] + 2.0 * t[2] * c[2];
                    let r2 = (d[0] - c[0]).powi(2) + (d[1] - c[1]).powi(2) + 2.0 * (d[2] - c[2]).powi(2);
                    model.b_density(m) + model.bi * m - dot + 0.5 * rho * r2
                };
                let got = objective(g.components[0]);
                if wn == 0.0 {
                    continue;
                }
                let upper = 2.0 * (wn / rho).max(1.0);
                for step in 0..=10_000 {
                    let m = upper * step as f64 / 10_000.0;
                    let candidate = [m * w[0] / wn, m * w[1] / wn, m * w[2] / wn];
                    assert!(
                        got <= objective(candidate) + 1e-8,
                        "{:?}: prox value {got} beaten at m = {m}",
                        model.kind
                    );
                }
            }
        }
    }

    #[test]
    fn primal_energy_hand_values() {
        let fine = fine_mesh(2);
        let zero_load = vec![0.0; 2 * fine.n_vertices()];
        let u = VelocityField::zeros(&fine);

        for model in all_models() {
            let g = TensorField::zeros(&fine);
            assert_eq!(model.primal_energy(&fine, &u, &g, &zero_load).unwrap(), 0.0);
        }

        // Bingham, |gamma| = 1: b + j = 1 + Bi
        let bingham = ConstitutiveModel::bingham(3.0).unwrap();
        let g = TensorField::constant(&fine, [1.0, 0.0, 0.0]);
        assert_relative_eq!(
            bingham.primal_energy(&fine, &u, &g, &zero_load).unwrap(),
            1.0 + 3.0,
            max_relative = 1e-13
        );

        // Herschel-Bulkley r = 1.5: 2^{r-1}/r + Bi = sqrt(2)/1.5 + Bi
        let hb = ConstitutiveModel::herschel_bulkley(2.0, 1.5).unwrap();
        assert_relative_eq!(
            hb.primal_energy(&fine, &u, &g, &zero_load).unwrap(),
            2.0f64.sqrt() / 1.5 + 2.0,
            max_relative = 1e-13
        );
    }
}
