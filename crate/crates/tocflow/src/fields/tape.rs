use super::VelocityField;
use crate::constraints::Constraint;
use crate::error::FieldError;
use crate::num::all_finite;

/// Unrolled k-step explicit Euler integration of the reference ODE from `t`
/// to 1, with every sub-step state cached for the forward and reverse
/// derivative chains (store-all checkpointing; k stays single-digit).
///
/// At `t >= 1` the tape is empty and the flow map is the identity.
#[derive(Debug, Clone)]
pub struct FlowTape {
    states: Vec<Vec<f64>>,
    times: Vec<f64>,
    step: f64,
}

impl FlowTape {
    pub fn unroll(
        field: &dyn VelocityField,
        x: &[f64],
        t: f64,
        k: usize,
    ) -> Result<Self, FieldError> {
        assert!(k >= 1, "lookahead needs k >= 1");
        if x.len() != field.dim() {
            return Err(FieldError::Dimension { expected: field.dim(), got: x.len() });
        }
        if t >= 1.0 {
            return Ok(FlowTape { states: vec![x.to_vec()], times: Vec::new(), step: 0.0 });
        }
        let step = (1.0 - t) / k as f64;
        let mut states = Vec::with_capacity(k + 1);
        let mut times = Vec::with_capacity(k);
        states.push(x.to_vec());
        for i in 0..k {
            let ti = t + (1.0 - t) * i as f64 / k as f64;
            let current = states.last().unwrap();
            let drift = field.eval(current, ti);
            let mut next = current.clone();
            for (n, d) in next.iter_mut().zip(&drift) {
                *n += step * d;
            }
            if !all_finite(&next) {
                return Err(FieldError::LookaheadDiverged { step: i, t: ti });
            }
            times.push(ti);
            states.push(next);
        }
        Ok(FlowTape { states, times, step })
    }

    /// Estimated terminal state `Phi_hat_{t -> 1}(x)`.
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Forward sensitivity `D Phi_hat v`: per Euler step `w += h jvp(x_i, t_i, w)`.
    pub fn forward(&self, field: &dyn VelocityField, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for (state, &ti) in self.states.iter().zip(&self.times) {
            let jw = field.jvp(state, ti, &w);
            for (wi, j) in w.iter_mut().zip(&jw) {
                *wi += self.step * j;
            }
        }
        w
    }

    /// Reverse chain `D Phi_hat^T u`: per Euler step, backwards,
    /// `u += h vjp(x_i, t_i, u)`.
    pub fn reverse(&self, field: &dyn VelocityField, u: &[f64]) -> Vec<f64> {
        let mut g = u.to_vec();
        for (state, &ti) in self.states.iter().zip(&self.times).rev() {
            let vg = field.vjp(state, ti, &g);
            for (gi, v) in g.iter_mut().zip(&vg) {
                *gi += self.step * v;
            }
        }
        g
    }
}

/// k-step Euler estimate of the flow map endpoint; `x` itself at `t >= 1`.
pub fn lookahead(
    field: &dyn VelocityField,
    x: &[f64],
    t: f64,
    k: usize,
) -> Result<Vec<f64>, FieldError> {
    Ok(FlowTape::unroll(field, x, t, k)?.endpoint().to_vec())
}

/// Exact gradient of `H(Phi_hat_{t -> 1}(x))` with respect to `x` by reverse
/// accumulation through the unrolled Euler steps, seeded with
/// `grad H = J_h^T h` at the lookahead endpoint.
pub fn pullback_grad(
    field: &dyn VelocityField,
    constraint: &dyn Constraint,
    x: &[f64],
    t: f64,
    k: usize,
) -> Result<Vec<f64>, FieldError> {
    let tape = FlowTape::unroll(field, x, t, k)?;
    let endpoint = tape.endpoint();
    let residual = constraint.residual(endpoint);
    let seed = constraint.vjp(endpoint, &residual);
    Ok(tape.reverse(field, &seed))
}

/// Forward sensitivity `D Phi_hat_{t -> 1}(x) v` through the unrolled steps.
pub fn forward_sensitivity(
    field: &dyn VelocityField,
    x: &[f64],
    t: f64,
    k: usize,
    v: &[f64],
) -> Result<Vec<f64>, FieldError> {
    Ok(FlowTape::unroll(field, x, t, k)?.forward(field, v))
}
