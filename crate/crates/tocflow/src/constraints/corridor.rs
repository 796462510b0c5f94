use super::Constraint;
use crate::error::ConstraintError;
use serde::{Deserialize, Serialize};

/// One safety corridor: a contiguous index span with lateral bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorridorSpan {
    pub start: usize,
    pub len: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Inequality corridors expressed as scaled one-sided violations: for each
/// constrained index `k`,
/// `h_k(f) = (max(0, lower - f_k) + max(0, f_k - upper)) / sqrt(|T|)`
/// where `|T|` is the total constrained index count. The residual is zero
/// exactly on the feasible set; the ReLU derivative at a kink is taken as 0.
#[derive(Debug, Clone)]
pub struct CorridorConstraint {
    spans: Vec<CorridorSpan>,
    dim: usize,
    scale: f64,
    /// (state index, lower, upper) per residual entry.
    entries: Vec<(usize, f64, f64)>,
}

impl CorridorConstraint {
    pub fn new(spans: Vec<CorridorSpan>, dim: usize) -> Result<Self, ConstraintError> {
        let mut entries = Vec::new();
        for span in &spans {
            assert!(span.lower < span.upper, "corridor needs lower < upper");
            for k in span.start..span.start + span.len {
                if k >= dim {
                    return Err(ConstraintError::IndexOutOfBounds { index: k, dim });
                }
                entries.push((k, span.lower, span.upper));
            }
        }
        assert!(!entries.is_empty(), "corridor constraint needs at least one index");
        let scale = 1.0 / (entries.len() as f64).sqrt();
        Ok(CorridorConstraint { spans, dim, scale, entries })
    }

    pub fn spans(&self) -> &[CorridorSpan] {
        &self.spans
    }

    pub fn constrained_count(&self) -> usize {
        self.entries.len()
    }

    /// Signed slope of the violation at `f`: -1 below, +1 above, 0 inside and
    /// at the kinks.
    fn slope(f: f64, lower: f64, upper: f64) -> f64 {
        if f < lower {
            -1.0
        } else if f > upper {
            1.0
        } else {
            0.0
        }
    }
}

impl Constraint for CorridorConstraint {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.entries.len()
    }
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|&(k, lo, hi)| {
                self.scale * ((lo - x[k]).max(0.0) + (x[k] - hi).max(0.0))
            })
            .collect()
    }
    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|&(k, lo, hi)| self.scale * Self::slope(x[k], lo, hi) * v[k])
            .collect()
    }
    fn vjp(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&(k, lo, hi), ui) in self.entries.iter().zip(u) {
            out[k] += self.scale * Self::slope(x[k], lo, hi) * ui;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{terminal_cost, testutil};

    fn simple() -> CorridorConstraint {
        CorridorConstraint::new(
            vec![CorridorSpan { start: 1, len: 4, lower: -1.0, upper: 1.0 }],
            6,
        )
        .unwrap()
    }

    #[test]
    fn feasible_points_have_zero_residual() {
        let c = simple();
        let x = [99.0, 0.0, 0.5, -0.5, 1.0, 99.0];
        assert!(c.residual(&x).iter().all(|r| *r == 0.0));
        assert_eq!(terminal_cost(&c, &x), 0.0);
    }

    #[test]
    fn single_violation_scales_by_sqrt_count() {
        // |T| = 4, one index below the lower bound by 0.2 -> entry 0.2/2 = 0.1.
        let c = simple();
        let x = [0.0, -1.2, 0.0, 0.0, 0.0, 0.0];
        let r = c.residual(&x);
        assert!((r[0] - 0.1).abs() < 1e-15);
        assert!(r[1..].iter().all(|v| *v == 0.0));
        // H grows quadratically in the violation depth: delta^2 / (2 |T|).
        assert!((terminal_cost(&c, &x) - 0.2 * 0.2 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn kink_uses_zero_derivative() {
        let c = simple();
        // f exactly on the lower bound: residual 0 and derivative 0.
        let x = [0.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        let seed = vec![1.0, 0.0, 0.0, 0.0];
        let g = c.vjp(&x, &seed);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn products_away_from_kinks() {
        let c = simple();
        let probe = |rng: &mut crate::num::RngStream| {
            // Keep probes at least 1e-3 away from the corridor kinks.
            let mut x = rng.standard_normal_vec(6);
            for xi in x.iter_mut() {
                *xi *= 3.0;
                if (xi.abs() - 1.0).abs() < 1e-2 {
                    *xi += 0.05;
                }
            }
            x
        };
        testutil::assert_adjoint_identity(&c, probe, 30, 5);
        testutil::assert_cost_grad_matches_fd(&c, probe, 20, 6, 1e-5, 1e-5);
    }

    #[test]
    fn quadratic_growth_property() {
        let c = simple();
        for delta in [0.05, 0.3, 1.7] {
            let x = [0.0, 0.0, 1.0 + delta, 0.0, 0.0, 0.0];
            let h = terminal_cost(&c, &x);
            assert!((h - delta * delta / (2.0 * 4.0)).abs() < 1e-12);
        }
    }
}
