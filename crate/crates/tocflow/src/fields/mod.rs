//! Time-dependent reference velocity fields with exact tangent and adjoint
//! products, plus the k-step Euler lookahead flow map and the gradient and
//! sensitivity chains through the unrolled integrator.

mod affine;
mod mixture;
mod mlp;
mod schema;
mod tape;

pub use affine::Affine1dField;
pub use mixture::{GaussianMixtureField, MixtureComponent};
pub use mlp::{Activation, NeuralMlpField};
pub use schema::FieldSpec;
pub use tape::{forward_sensitivity, lookahead, pullback_grad, FlowTape};

/// A reference drift `b*(x, t)` on `[0, 1]` with exact derivative products.
///
/// Implementations must satisfy the adjoint identity
/// `<u, jvp(x, t, v)> = <vjp(x, t, u), v>` to round-off, and both products
/// must agree with central finite differences of `eval`.
pub trait VelocityField: Send + Sync {
    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Velocity `b*(x, t)`.
    fn eval(&self, x: &[f64], t: f64) -> Vec<f64>;

    /// Tangent product `(db*/dx) v`.
    fn jvp(&self, x: &[f64], t: f64, v: &[f64]) -> Vec<f64>;

    /// Adjoint product `(db*/dx)^T u`.
    fn vjp(&self, x: &[f64], t: f64, u: &[f64]) -> Vec<f64>;
}

/// The zero drift; useful as a degenerate reference flow in tests and as the
/// identity lookahead.
#[derive(Debug, Clone)]
pub struct ZeroField {
    pub dim: usize,
}

impl VelocityField for ZeroField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn jvp(&self, _x: &[f64], _t: f64, _v: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn vjp(&self, _x: &[f64], _t: f64, _u: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::VelocityField;
    use crate::num::{dot, norm2, RngStream};

    /// Checks `<u, jvp(v)> = <vjp(u), v>` on random probes.
    pub fn assert_adjoint_identity(field: &dyn VelocityField, probes: usize, seed: u64) {
        let d = field.dim();
        let mut rng = RngStream::new(seed, 0);
        for _ in 0..probes {
            let x = rng.standard_normal_vec(d);
            let t = rng.uniform_in(0.0, 1.0);
            let v = rng.standard_normal_vec(d);
            let u = rng.standard_normal_vec(d);
            let lhs = dot(&u, &field.jvp(&x, t, &v));
            let rhs = dot(&field.vjp(&x, t, &u), &v);
            let scale = lhs.abs().max(rhs.abs()).max(1e-12);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * scale,
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    /// Checks the jvp against central finite differences of `eval`.
    pub fn assert_jvp_matches_fd(field: &dyn VelocityField, probes: usize, seed: u64) {
        let d = field.dim();
        let eps = 1e-5;
        let mut rng = RngStream::new(seed, 1);
        for _ in 0..probes {
            let x = rng.standard_normal_vec(d);
            let t = rng.uniform_in(0.05, 0.95);
            let v = rng.standard_normal_vec(d);
            let analytic = field.jvp(&x, t, &v);
            let mut plus = x.clone();
            let mut minus = x.clone();
            for i in 0..d {
                plus[i] += eps * v[i];
                minus[i] -= eps * v[i];
            }
            let fp = field.eval(&plus, t);
            let fm = field.eval(&minus, t);
            let fd: Vec<f64> =
                fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
            let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
            let scale = norm2(&fd).max(norm2(&analytic)).max(1e-8);
            assert!(
                norm2(&diff) <= 1e-5 * scale,
                "jvp vs finite differences: rel error {}",
                norm2(&diff) / scale
            );
        }
    }
}
