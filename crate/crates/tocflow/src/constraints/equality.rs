use super::Constraint;
use crate::error::ConstraintError;

/// Fixes a subset of coordinates: `h(x) = x_I - y`.
#[derive(Debug, Clone)]
pub struct CoordinateEquality {
    indices: Vec<usize>,
    targets: Vec<f64>,
    dim: usize,
}

impl CoordinateEquality {
    pub fn new(indices: Vec<usize>, targets: Vec<f64>, dim: usize) -> Result<Self, ConstraintError> {
        assert_eq!(indices.len(), targets.len());
        let mut seen = vec![false; dim];
        for &i in &indices {
            if i >= dim {
                return Err(ConstraintError::IndexOutOfBounds { index: i, dim });
            }
            assert!(!seen[i], "duplicate constrained index {i}");
            seen[i] = true;
        }
        Ok(CoordinateEquality { indices, targets, dim })
    }
}

impl Constraint for CoordinateEquality {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.indices.len()
    }
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.indices.iter().zip(&self.targets).map(|(&i, y)| x[i] - y).collect()
    }
    fn jvp(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| v[i]).collect()
    }
    fn vjp(&self, _x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, ui) in self.indices.iter().zip(u) {
            out[i] = *ui;
        }
        out
    }
}
