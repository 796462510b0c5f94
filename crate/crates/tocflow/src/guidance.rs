//! Weight schedules, stretched time and the guidance solvers.
//!
//! Every solver estimates the value-function gradient at `(x, t)` from a
//! k-step Euler lookahead of the reference flow:
//!
//! * [`gd_solve`] — the pullback gradient of the terminal cost, a steepest
//!   descent direction in the flat metric;
//! * [`toc_solve`] — the same direction rescaled by the closed-form damping
//!   `tau* = 1 / (1 + s |g|^2 / |h|^2)`, which accounts for the flow-induced
//!   geometry along the gradient line;
//! * [`gn_solve`] — the damped Gauss-Newton direction, solving
//!   `(I + s M M^T) alpha = h` matrix-free in the r-dimensional residual
//!   space with conjugate gradient (`M = J_h DPhi`);
//! * [`terminal_project`] and [`gn_approx_step`] — the projection-style
//!   baselines.

use crate::constraints::Constraint;
use crate::error::FieldError;
use crate::fields::{FlowTape, VelocityField};
use crate::num::{cg_solve, dot, norm2, CgResult};
use serde::{Deserialize, Serialize};

/// Power-law control-penalty schedule `lambda(t) = lambda0 (1 - t)^gamma`.
/// `gamma = 0` is the constant schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub lambda0: f64,
    pub gamma: f64,
}

impl WeightSchedule {
    pub fn constant(lambda0: f64) -> Self {
        WeightSchedule { lambda0, gamma: 0.0 }
    }

    pub fn power_law(lambda0: f64, gamma: f64) -> Self {
        assert!(lambda0 > 0.0, "lambda0 must be positive");
        assert!(gamma >= 0.0, "gamma must be nonnegative");
        WeightSchedule { lambda0, gamma }
    }

    pub fn lambda(&self, t: f64) -> f64 {
        self.lambda0 * (1.0 - t).powf(self.gamma)
    }
}

/// Stretched time `s(t) = int_t^1 lambda_u^{-1} du`, the remaining control
/// budget in reparameterized time.
///
/// For `gamma < 1` the integral converges and is evaluated in closed form.
/// For `gamma >= 1` it diverges at `t = 1`, so the upper limit is truncated
/// at `1 - eps_s` (and `s = 0` beyond it), matching what a discrete sampler
/// with final grid spacing `eps_s` can see.
pub fn stretched_time(schedule: &WeightSchedule, t: f64, eps_s: f64) -> f64 {
    assert!((0.0..=1.0).contains(&t), "stretched_time needs 0 <= t <= 1");
    let g = schedule.gamma;
    let l0 = schedule.lambda0;
    if g < 1.0 {
        return (1.0 - t).powf(1.0 - g) / (l0 * (1.0 - g));
    }
    assert!(eps_s > 0.0, "divergent schedule needs a truncation width");
    if t >= 1.0 - eps_s {
        return 0.0;
    }
    if (g - 1.0).abs() < 1e-12 {
        ((1.0 - t) / eps_s).ln() / l0
    } else {
        (eps_s.powf(1.0 - g) - (1.0 - t).powf(1.0 - g)) / (l0 * (g - 1.0))
    }
}

/// Guidance method selector, mirroring the sampler's configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMethod {
    Vanilla,
    Gd,
    Tocflow,
    Gn,
    GnApprox,
    TerminalProjection,
}

/// Everything the per-step solvers need besides the state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    pub method: GuidanceMethod,
    /// Lookahead Euler steps for the flow-map estimate.
    pub k: usize,
    /// Constant GD step size, used in place of `1/lambda_t` when `method = gd`.
    pub eta: f64,
    pub lambda0: f64,
    pub gamma: f64,
    pub cg_tol: f64,
    /// Gauss-Newton CG iteration cap; `0` means `min(r, 100)`.
    pub cg_max: usize,
    pub proj_budget: usize,
    pub proj_inner_cg: usize,
    /// Truncation width for divergent stretched-time integrals; `None`
    /// defaults to the sampler's step size.
    pub eps_s: Option<f64>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            method: GuidanceMethod::Vanilla,
            k: 4,
            eta: 0.1,
            lambda0: 1.0,
            gamma: 0.0,
            cg_tol: 1e-8,
            cg_max: 0,
            proj_budget: 1000,
            proj_inner_cg: 20,
            eps_s: None,
        }
    }
}

impl GuidanceConfig {
    pub fn schedule(&self) -> WeightSchedule {
        WeightSchedule::power_law(self.lambda0, self.gamma)
    }

    pub fn cg_max_for(&self, r: usize) -> usize {
        if self.cg_max == 0 {
            r.min(100).max(1)
        } else {
            self.cg_max
        }
    }
}

/// Damping used by the projection solver; small enough to leave affine
/// constraints exact at the stopping tolerance.
pub const PROJECTION_DAMPING: f64 = 1e-6;

/// Residual-norm stopping threshold for the projection solver.
pub const PROJECTION_TOL: f64 = 1e-12;

/// Pullback gradient of the terminal cost through the lookahead flow,
/// `grad_x (H o Phi_hat_{t -> 1})(x)`. The caller applies its own step
/// coefficient (`eta` for GD, `1/lambda_t` otherwise).
pub fn gd_solve(
    field: &dyn VelocityField,
    constraint: &dyn Constraint,
    x: &[f64],
    t: f64,
    k: usize,
) -> Result<Vec<f64>, FieldError> {
    crate::fields::pullback_grad(field, constraint, x, t, k)
}

/// Scalar-damped pullback gradient: `tau* g` with
/// `tau* = |h|^2 / (|h|^2 + s |g|^2)`. Returns zero when the lookahead
/// residual already vanishes.
pub fn toc_solve(
    field: &dyn VelocityField,
    constraint: &dyn Constraint,
    x: &[f64],
    t: f64,
    k: usize,
    s: f64,
) -> Result<Vec<f64>, FieldError> {
    assert!(s >= 0.0, "stretched time must be nonnegative");
    let tape = FlowTape::unroll(field, x, t, k)?;
    let endpoint = tape.endpoint();
    let residual = constraint.residual(endpoint);
    let r_sq = dot(&residual, &residual);
    if r_sq == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let seed = constraint.vjp(endpoint, &residual);
    let mut g = tape.reverse(field, &seed);
    let g_sq = dot(&g, &g);
    let tau = 1.0 / (1.0 + s * g_sq / r_sq);
    for gi in g.iter_mut() {
        *gi *= tau;
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct GnOutput {
    pub grad: Vec<f64>,
    pub cg_iterations: usize,
    pub cg_converged: bool,
}

/// Damped Gauss-Newton gradient `M^T (I + s M M^T)^{-1} h` with
/// `M = J_h(y) DPhi_hat_{t -> 1}(x)`, solved matrix-free by conjugate
/// gradient in the residual space. Non-convergence returns the last CG
/// iterate with a warning flag rather than failing the step.
#[allow(clippy::too_many_arguments)]
pub fn gn_solve(
    field: &dyn VelocityField,
    constraint: &dyn Constraint,
    x: &[f64],
    t: f64,
    k: usize,
    s: f64,
    cg_tol: f64,
    cg_max: usize,
) -> Result<GnOutput, FieldError> {
    assert!(s >= 0.0, "stretched time must be nonnegative");
    let tape = FlowTape::unroll(field, x, t, k)?;
    let endpoint = tape.endpoint().to_vec();
    let residual = constraint.residual(&endpoint);
    // alpha + s M (M^T alpha), with M^T via the reverse Euler chain and M via
    // the forward sensitivity.
    let apply = |alpha: &[f64]| {
        let pulled = tape.reverse(field, &constraint.vjp(&endpoint, alpha));
        let pushed = constraint.jvp(&endpoint, &tape.forward(field, &pulled));
        alpha.iter().zip(&pushed).map(|(a, p)| a + s * p).collect()
    };
    let CgResult { x: alpha, iterations, outcome, .. } =
        cg_solve(apply, &residual, cg_tol, cg_max);
    let grad = tape.reverse(field, &constraint.vjp(&endpoint, &alpha));
    Ok(GnOutput {
        grad,
        cg_iterations: iterations,
        cg_converged: outcome == crate::num::CgOutcome::Converged,
    })
}

/// Damped Gauss-Newton projection of `x1` onto the constraint manifold:
/// per iteration solve `(J J^T + mu I) alpha = h(z)` with CG and update
/// `z <- z - J^T alpha`, stopping at the residual tolerance or the budget.
/// Returns the best iterate seen.
pub fn terminal_project(
    constraint: &dyn Constraint,
    x1: &[f64],
    budget: usize,
    inner_cg: usize,
    damping: f64,
) -> Vec<f64> {
    assert!(budget >= 1, "projection needs a budget of at least one iteration");
    let mut z = x1.to_vec();
    let mut best = z.clone();
    let mut best_norm = norm2(&constraint.residual(&z));
    for _ in 0..budget {
        let residual = constraint.residual(&z);
        let rnorm = norm2(&residual);
        if rnorm < best_norm {
            best_norm = rnorm;
            best = z.clone();
        }
        if rnorm <= PROJECTION_TOL {
            return z;
        }
        let apply = |u: &[f64]| {
            let jt = constraint.vjp(&z, u);
            let jjt = constraint.jvp(&z, &jt);
            jjt.iter().zip(u).map(|(a, ui)| a + damping * ui).collect::<Vec<f64>>()
        };
        let alpha = cg_solve(apply, &residual, 1e-12, inner_cg.max(1)).x;
        let step = constraint.vjp(&z, &alpha);
        for (zi, si) in z.iter_mut().zip(&step) {
            *zi -= si;
        }
    }
    let final_norm = norm2(&constraint.residual(&z));
    if final_norm <= best_norm {
        z
    } else {
        best
    }
}

/// Interpolation baseline: project the lookahead endpoint onto the manifold
/// and pull the correction back along the linear-interpolant geodesic,
/// `x_{t+dt} = (1 - (t + dt)) x0 + (t + dt) x1_proj`.
#[allow(clippy::too_many_arguments)]
pub fn gn_approx_step(
    field: &dyn VelocityField,
    constraint: &dyn Constraint,
    x0: &[f64],
    x_t: &[f64],
    t: f64,
    dt: f64,
    k: usize,
    proj_budget: usize,
    proj_inner_cg: usize,
) -> Result<Vec<f64>, FieldError> {
    let ahead = crate::fields::lookahead(field, x_t, t, k)?;
    let projected =
        terminal_project(constraint, &ahead, proj_budget, proj_inner_cg, PROJECTION_DAMPING);
    let w = (t + dt).clamp(0.0, 1.0);
    Ok(x0
        .iter()
        .zip(&projected)
        .map(|(a, b)| (1.0 - w) * a + w * b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::CoordinateEquality;
    use crate::fields::{Affine1dField, ZeroField};
    use crate::num::{simpson, RngStream};

    #[test]
    fn stretched_time_constant_schedule() {
        let sch = WeightSchedule::constant(1.0);
        assert!((stretched_time(&sch, 0.0, 0.01) - 1.0).abs() < 1e-15);
        let sch2 = WeightSchedule::constant(4.0);
        assert!((stretched_time(&sch2, 0.5, 0.01) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn stretched_time_sqrt_schedule() {
        let sch = WeightSchedule::power_law(1.0, 0.5);
        assert!((stretched_time(&sch, 0.0, 0.01) - 2.0).abs() < 1e-12);
    }

    // Oracle: Simpson quadrature of the truncated integrand.
    #[test]
    fn stretched_time_divergent_schedule_matches_quadrature() {
        let sch = WeightSchedule::power_law(1e10, 10.0);
        let (t, eps) = (0.9, 0.005);
        let closed = stretched_time(&sch, t, eps);
        let quad = simpson(|u| 1.0 / sch.lambda(u), t, 1.0 - eps, 4096);
        assert!(
            (closed - quad).abs() <= 1e-9 * quad.abs(),
            "closed {closed} vs quadrature {quad}"
        );
        // Inside the truncation window the budget is exhausted.
        assert_eq!(stretched_time(&sch, 0.999, 0.005), 0.0);
    }

    #[test]
    fn stretched_time_log_schedule() {
        let sch = WeightSchedule::power_law(2.0, 1.0);
        let (t, eps) = (0.3, 0.01);
        let closed = stretched_time(&sch, t, eps);
        let quad = simpson(|u| 1.0 / sch.lambda(u), t, 1.0 - eps, 4096);
        assert!((closed - quad).abs() <= 1e-9 * quad.abs());
    }

    fn scalar_problem() -> (Affine1dField, CoordinateEquality) {
        (
            Affine1dField::new(2.0, 1.0),
            CoordinateEquality::new(vec![0], vec![0.0], 1).unwrap(),
        )
    }

    #[test]
    fn gd_zero_residual_gives_zero() {
        let field = ZeroField { dim: 2 };
        let c = CoordinateEquality::new(vec![0], vec![0.7], 2).unwrap();
        let g = gd_solve(&field, &c, &[0.7, 3.0], 0.4, 4).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn gd_identity_flow_quadratic_cost() {
        let field = ZeroField { dim: 2 };
        let c = CoordinateEquality::new(vec![0, 1], vec![0.0, 0.0], 2).unwrap();
        let x = vec![1.25, -0.5];
        assert_eq!(gd_solve(&field, &c, &x, 0.2, 4).unwrap(), x);
    }

    #[test]
    fn toc_at_zero_budget_equals_gd() {
        let (field, c) = scalar_problem();
        let x = [0.8];
        let gd = gd_solve(&field, &c, &x, 0.3, 4).unwrap();
        let toc = toc_solve(&field, &c, &x, 0.3, 4, 0.0).unwrap();
        assert_eq!(gd, toc);
    }

    #[test]
    fn toc_damping_direct_substitution() {
        // r^2 = 4, s = 1, |g|^2 = 4 -> tau* = 1/2, output g/2.
        struct Full;
        impl crate::constraints::Constraint for Full {
            fn dim_in(&self) -> usize {
                2
            }
            fn dim_out(&self) -> usize {
                2
            }
            fn residual(&self, x: &[f64]) -> Vec<f64> {
                x.to_vec()
            }
            fn jvp(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
                v.to_vec()
            }
            fn vjp(&self, _x: &[f64], u: &[f64]) -> Vec<f64> {
                u.to_vec()
            }
        }
        let field = ZeroField { dim: 2 };
        // |x|^2 = 4; identity flow means g = x, so |g|^2 = 4 too.
        let x = [2.0_f64.sqrt(), 2.0_f64.sqrt()];
        let out = toc_solve(&field, &Full, &x, 0.5, 4, 1.0).unwrap();
        for (o, xi) in out.iter().zip(&x) {
            assert!((o - 0.5 * xi).abs() < 1e-14);
        }
    }

    #[test]
    fn toc_returns_zero_on_satisfied_constraint() {
        let (field, c) = scalar_problem();
        let out = toc_solve(&field, &c, &[0.0], 1.0, 4, 0.5).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn gn_at_zero_budget_equals_gd_exactly() {
        let (field, c) = scalar_problem();
        let x = [0.8];
        let gd = gd_solve(&field, &c, &x, 0.3, 4).unwrap();
        let gn = gn_solve(&field, &c, &x, 0.3, 4, 0.0, 1e-8, 10).unwrap();
        assert!(gn.cg_converged);
        assert_eq!(gd, gn.grad);
    }

    #[test]
    fn gn_matches_toc_for_scalar_constraints() {
        let (field, c) = scalar_problem();
        let mut rng = RngStream::new(17, 0);
        for _ in 0..50 {
            let x = [3.0 * rng.standard_normal()];
            let t = rng.uniform_in(0.0, 0.95);
            let s = rng.uniform_in(0.0, 2.0);
            let toc = toc_solve(&field, &c, &x, t, 4, s).unwrap();
            let gn = gn_solve(&field, &c, &x, t, 4, s, 1e-14, 8).unwrap();
            let scale = toc[0].abs().max(1e-12);
            assert!(
                (toc[0] - gn.grad[0]).abs() <= 1e-9 * scale,
                "toc {} vs gn {}",
                toc[0],
                gn.grad[0]
            );
        }
    }

    // Oracle: dense solve of (I + s J J^T) alpha = h for a linear constraint
    // under the identity flow (b = 0, so DPhi = I and G = I).
    #[test]
    fn gn_matches_dense_formula() {
        use crate::num::{cholesky, solve_lower, solve_lower_transpose, Matrix};
        struct LinearConstraint {
            a: Matrix,
            b: Vec<f64>,
        }
        impl crate::constraints::Constraint for LinearConstraint {
            fn dim_in(&self) -> usize {
                self.a.cols()
            }
            fn dim_out(&self) -> usize {
                self.a.rows()
            }
            fn residual(&self, x: &[f64]) -> Vec<f64> {
                let mut r = self.a.matvec(x);
                for (ri, bi) in r.iter_mut().zip(&self.b) {
                    *ri -= bi;
                }
                r
            }
            fn jvp(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
                self.a.matvec(v)
            }
            fn vjp(&self, _x: &[f64], u: &[f64]) -> Vec<f64> {
                self.a.matvec_t(u)
            }
        }
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]);
        let c = LinearConstraint { a: a.clone(), b: vec![0.3, -0.7] };
        let field = ZeroField { dim: 2 };
        let x = [0.9, -1.4];
        let s = 0.8;
        let gn = gn_solve(&field, &c, &x, 0.25, 4, s, 1e-14, 50).unwrap();
        // Dense route: J_h^T (I + s J_h J_h^T)^{-1} h.
        let h = c.residual(&x);
        let mut op = a.matmul(&a.transpose());
        for e in op.data_mut().iter_mut() {
            *e *= s;
        }
        for i in 0..2 {
            op[(i, i)] += 1.0;
        }
        let l = cholesky(&op).unwrap();
        let alpha = solve_lower_transpose(&l, &solve_lower(&l, &h));
        let want = a.matvec_t(&alpha);
        for (g, w) in gn.grad.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8, "{g} vs {w}");
        }
    }

    #[test]
    fn projection_leaves_feasible_points_alone() {
        let c = CoordinateEquality::new(vec![0], vec![1.0], 2).unwrap();
        let x = [1.0, 42.0];
        assert_eq!(terminal_project(&c, &x, 10, 5, PROJECTION_DAMPING), x.to_vec());
    }

    #[test]
    fn projection_solves_affine_constraint() {
        let c = CoordinateEquality::new(vec![0], vec![0.0], 2).unwrap();
        let z = terminal_project(&c, &[3.0, 5.0], 10, 5, PROJECTION_DAMPING);
        assert!(z[0].abs() < 1e-10, "z0 = {}", z[0]);
        assert_eq!(z[1], 5.0);
    }

    // Oracle: direct geometric clamp onto the corridor boundary.
    #[test]
    fn projection_clamps_corridor_violation() {
        use crate::constraints::{CorridorConstraint, CorridorSpan};
        let c = CorridorConstraint::new(
            vec![CorridorSpan { start: 0, len: 4, lower: -1.0, upper: 1.0 }],
            4,
        )
        .unwrap();
        let x = [-1.3, 0.2, 1.8, 0.9];
        let z = terminal_project(&c, &x, 50, 10, PROJECTION_DAMPING);
        let want = [-1.0, 0.2, 1.0, 0.9];
        for (zi, wi) in z.iter().zip(&want) {
            assert!((zi - wi).abs() < 1e-10, "{z:?} vs {want:?}");
        }
    }

    #[test]
    fn gn_approx_interpolation_endpoints() {
        let field = ZeroField { dim: 2 };
        let c = CoordinateEquality::new(vec![0], vec![0.0], 2).unwrap();
        let x0 = [0.5, -0.5];
        let xt = [3.0, 1.0];
        // t + dt = 1 returns the projected lookahead exactly.
        let at_one = gn_approx_step(&field, &c, &x0, &xt, 0.9, 0.1, 4, 20, 10).unwrap();
        assert!(at_one[0].abs() < 1e-10);
        assert_eq!(at_one[1], 1.0);
        // t + dt = 0 returns x0.
        let at_zero = gn_approx_step(&field, &c, &x0, &xt, 0.0, 0.0, 4, 20, 10).unwrap();
        assert_eq!(at_zero, x0.to_vec());
        // Intermediate times draw the straight line from x0 to the clamp.
        let mid = gn_approx_step(&field, &c, &x0, &xt, 0.4, 0.1, 4, 20, 10).unwrap();
        let w = 0.5;
        let proj = [0.0, 1.0];
        for i in 0..2 {
            let want = (1.0 - w) * x0[i] + w * proj[i];
            assert!((mid[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn tau_star_stays_in_unit_interval() {
        let (field, c) = scalar_problem();
        let mut rng = RngStream::new(23, 0);
        for _ in 0..40 {
            let x = [4.0 * rng.standard_normal()];
            let t = rng.uniform_in(0.0, 0.99);
            let s = rng.uniform_in(0.0, 5.0);
            let gd = gd_solve(&field, &c, &x, t, 4).unwrap();
            let toc = toc_solve(&field, &c, &x, t, 4, s).unwrap();
            if gd[0].abs() < 1e-300 {
                continue;
            }
            let tau = toc[0] / gd[0];
            assert!(tau > 0.0 && tau <= 1.0, "tau = {tau}");
            // tau = 1 iff s |g|^2 = 0.
            if s > 0.0 {
                assert!(tau < 1.0);
            }
        }
    }
}
