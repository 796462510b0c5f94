//! Constraint residual maps `h: R^d -> R^r`, their Jacobian products and the
//! terminal cost `H = 0.5 ||h||^2`.

mod corridor;
mod darcy;
mod equality;
mod spectrum;

pub use corridor::{CorridorConstraint, CorridorSpan};
pub use darcy::DarcyConstraint;
pub use equality::CoordinateEquality;
pub use spectrum::{EnergyConvention, SpectrumConstraint};

use crate::num::dot;

/// Residual map defining the constraint manifold `{x : h(x) = 0}`.
///
/// `jvp`/`vjp` must satisfy the adjoint identity
/// `<u, jvp(x, v)> = <vjp(x, u), v>` to round-off; the residual is
/// piecewise-C1 and the products use the one-sided convention recorded by
/// each constraint at its kinks.
pub trait Constraint: Send + Sync {
    /// State dimension `d`.
    fn dim_in(&self) -> usize;

    /// Residual dimension `r`.
    fn dim_out(&self) -> usize;

    /// Residual vector `h(x)`.
    fn residual(&self, x: &[f64]) -> Vec<f64>;

    /// `J_h(x) v`.
    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// `J_h(x)^T u`.
    fn vjp(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
}

/// Terminal cost `H(x) = 0.5 sum_i h_i(x)^2`.
pub fn terminal_cost(c: &dyn Constraint, x: &[f64]) -> f64 {
    let r = c.residual(x);
    0.5 * dot(&r, &r)
}

/// Gradient of the terminal cost, `J_h^T h`.
pub fn cost_grad(c: &dyn Constraint, x: &[f64]) -> Vec<f64> {
    let r = c.residual(x);
    c.vjp(x, &r)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::{cost_grad, terminal_cost, Constraint};
    use crate::num::{dot, grad_check, RngStream};

    pub fn assert_adjoint_identity(
        c: &dyn Constraint,
        probe: impl Fn(&mut RngStream) -> Vec<f64>,
        probes: usize,
        seed: u64,
    ) {
        let mut rng = RngStream::new(seed, 0);
        for _ in 0..probes {
            let x = probe(&mut rng);
            let v = rng.standard_normal_vec(c.dim_in());
            let u = rng.standard_normal_vec(c.dim_out());
            let lhs = dot(&u, &c.jvp(&x, &v));
            let rhs = dot(&c.vjp(&x, &u), &v);
            let scale = lhs.abs().max(rhs.abs()).max(1e-12);
            assert!((lhs - rhs).abs() <= 1e-10 * scale, "adjoint: {lhs} vs {rhs}");
        }
    }

    pub fn assert_cost_grad_matches_fd(
        c: &dyn Constraint,
        probe: impl Fn(&mut RngStream) -> Vec<f64>,
        probes: usize,
        seed: u64,
        eps: f64,
        tol: f64,
    ) {
        let mut rng = RngStream::new(seed, 1);
        for _ in 0..probes {
            let x = probe(&mut rng);
            let err = grad_check(|y| terminal_cost(c, y), |y| cost_grad(c, y), &x, eps);
            assert!(err <= tol, "cost gradient vs finite differences: {err}");
        }
    }
}
