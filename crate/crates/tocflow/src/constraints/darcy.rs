use super::Constraint;
use crate::error::ConstraintError;

/// Discrete Darcy-flow residual on an n x n grid over the unit square.
///
/// The state holds two channels, permeability first and pressure second
/// (row-major, `d = 2 n^2`). In the default parameterization the first
/// channel carries `log K` and is exponentiated inside the residual so
/// guidance can never produce a negative permeability.
///
/// The residual has length `n^2`: interior positions hold the second-order
/// central-difference PDE residual `-K D^2 p - (D K) . (D p) - f`, edge
/// positions hold the first-order one-sided normal difference of `p`, and
/// each corner emits the sum of the two one-sided differences along its
/// adjacent edges. The pressure channel is mean-centered before any
/// residual row is formed.
#[derive(Debug, Clone)]
pub struct DarcyConstraint {
    n: usize,
    delta: f64,
    log_permeability: bool,
    source: Vec<f64>,
}

impl DarcyConstraint {
    pub const SOURCE_MAGNITUDE: f64 = 10.0;
    pub const SOURCE_WIDTH: f64 = 0.125;

    pub fn new(n: usize) -> Result<Self, ConstraintError> {
        Self::with_source(n, Self::SOURCE_MAGNITUDE, Self::SOURCE_WIDTH, true)
    }

    pub fn with_source(
        n: usize,
        magnitude: f64,
        width: f64,
        log_permeability: bool,
    ) -> Result<Self, ConstraintError> {
        if n < 3 {
            return Err(ConstraintError::GridTooSmall(n));
        }
        let delta = 1.0 / (n - 1) as f64;
        let mut source = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let xi = i as f64 * delta;
                let xj = j as f64 * delta;
                let near_origin = (xi - width / 2.0).abs() <= width / 2.0
                    && (xj - width / 2.0).abs() <= width / 2.0;
                let near_far = (xi - (1.0 - width / 2.0)).abs() <= width / 2.0
                    && (xj - (1.0 - width / 2.0)).abs() <= width / 2.0;
                source[i * n + j] = if near_origin {
                    magnitude
                } else if near_far {
                    -magnitude
                } else {
                    0.0
                };
            }
        }
        Ok(DarcyConstraint { n, delta, log_permeability, source })
    }

    pub fn grid_side(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Permeability values from the first channel.
    fn permeability(&self, state: &[f64]) -> Vec<f64> {
        let m = self.n * self.n;
        if self.log_permeability {
            state[..m].iter().map(|g| g.exp()).collect()
        } else {
            state[..m].to_vec()
        }
    }

    fn centered_pressure(&self, state: &[f64]) -> Vec<f64> {
        let m = self.n * self.n;
        let p = &state[m..];
        let mean = p.iter().sum::<f64>() / m as f64;
        p.iter().map(|v| v - mean).collect()
    }

    fn laplacian(&self, field: &[f64], i: usize, j: usize) -> f64 {
        (field[self.idx(i + 1, j)]
            + field[self.idx(i - 1, j)]
            + field[self.idx(i, j + 1)]
            + field[self.idx(i, j - 1)]
            - 4.0 * field[self.idx(i, j)])
            / (self.delta * self.delta)
    }

    fn grad_i(&self, field: &[f64], i: usize, j: usize) -> f64 {
        (field[self.idx(i + 1, j)] - field[self.idx(i - 1, j)]) / (2.0 * self.delta)
    }

    fn grad_j(&self, field: &[f64], i: usize, j: usize) -> f64 {
        (field[self.idx(i, j + 1)] - field[self.idx(i, j - 1)]) / (2.0 * self.delta)
    }

    /// One-sided normal difference terms for a boundary point, as
    /// (neighbor index, sign) pairs; corners contribute two terms.
    fn boundary_terms(&self, i: usize, j: usize) -> Vec<usize> {
        let n = self.n;
        let mut inner = Vec::with_capacity(2);
        if i == 0 {
            inner.push(self.idx(1, j));
        }
        if i == n - 1 {
            inner.push(self.idx(n - 2, j));
        }
        if j == 0 {
            inner.push(self.idx(i, 1));
        }
        if j == n - 1 {
            inner.push(self.idx(i, n - 2));
        }
        inner
    }
}

impl Constraint for DarcyConstraint {
    fn dim_in(&self) -> usize {
        2 * self.n * self.n
    }

    fn dim_out(&self) -> usize {
        self.n * self.n
    }

    fn residual(&self, state: &[f64]) -> Vec<f64> {
        let n = self.n;
        let k = self.permeability(state);
        let p = self.centered_pressure(state);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let at = self.idx(i, j);
                let interior = i > 0 && i < n - 1 && j > 0 && j < n - 1;
                if interior {
                    out[at] = -k[at] * self.laplacian(&p, i, j)
                        - self.grad_i(&k, i, j) * self.grad_i(&p, i, j)
                        - self.grad_j(&k, i, j) * self.grad_j(&p, i, j)
                        - self.source[at];
                } else {
                    let mut acc = 0.0;
                    for inner in self.boundary_terms(i, j) {
                        acc += (p[at] - p[inner]) / self.delta;
                    }
                    out[at] = acc;
                }
            }
        }
        out
    }

    fn jvp(&self, state: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let m = n * n;
        let k = self.permeability(state);
        let p = self.centered_pressure(state);
        // dK = K dg under the log parameterization, otherwise just dg.
        let dk: Vec<f64> = if self.log_permeability {
            v[..m].iter().zip(&k).map(|(dg, ki)| dg * ki).collect()
        } else {
            v[..m].to_vec()
        };
        let vmean = v[m..].iter().sum::<f64>() / m as f64;
        let dp: Vec<f64> = v[m..].iter().map(|x| x - vmean).collect();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for j in 0..n {
                let at = self.idx(i, j);
                let interior = i > 0 && i < n - 1 && j > 0 && j < n - 1;
                if interior {
                    out[at] = -dk[at] * self.laplacian(&p, i, j)
                        - k[at] * self.laplacian(&dp, i, j)
                        - self.grad_i(&dk, i, j) * self.grad_i(&p, i, j)
                        - self.grad_i(&k, i, j) * self.grad_i(&dp, i, j)
                        - self.grad_j(&dk, i, j) * self.grad_j(&p, i, j)
                        - self.grad_j(&k, i, j) * self.grad_j(&dp, i, j);
                } else {
                    let mut acc = 0.0;
                    for inner in self.boundary_terms(i, j) {
                        acc += (dp[at] - dp[inner]) / self.delta;
                    }
                    out[at] = acc;
                }
            }
        }
        out
    }

    fn vjp(&self, state: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let m = n * n;
        let k = self.permeability(state);
        let p = self.centered_pressure(state);
        let d = self.delta;
        let d2 = d * d;
        let mut ak = vec![0.0; m];
        let mut ap = vec![0.0; m];
        for i in 0..n {
            for j in 0..n {
                let at = self.idx(i, j);
                let w = u[at];
                if w == 0.0 {
                    continue;
                }
                let interior = i > 0 && i < n - 1 && j > 0 && j < n - 1;
                if interior {
                    // -dK[at] * lap(p)
                    ak[at] -= self.laplacian(&p, i, j) * w;
                    // -K[at] * lap(dp)
                    let c = -k[at] * w / d2;
                    ap[self.idx(i + 1, j)] += c;
                    ap[self.idx(i - 1, j)] += c;
                    ap[self.idx(i, j + 1)] += c;
                    ap[self.idx(i, j - 1)] += c;
                    ap[at] -= 4.0 * c;
                    // -grad_i(dK) grad_i(p) and -grad_i(K) grad_i(dp)
                    let gpi = self.grad_i(&p, i, j);
                    ak[self.idx(i + 1, j)] -= gpi * w / (2.0 * d);
                    ak[self.idx(i - 1, j)] += gpi * w / (2.0 * d);
                    let gki = self.grad_i(&k, i, j);
                    ap[self.idx(i + 1, j)] -= gki * w / (2.0 * d);
                    ap[self.idx(i - 1, j)] += gki * w / (2.0 * d);
                    // Same along j.
                    let gpj = self.grad_j(&p, i, j);
                    ak[self.idx(i, j + 1)] -= gpj * w / (2.0 * d);
                    ak[self.idx(i, j - 1)] += gpj * w / (2.0 * d);
                    let gkj = self.grad_j(&k, i, j);
                    ap[self.idx(i, j + 1)] -= gkj * w / (2.0 * d);
                    ap[self.idx(i, j - 1)] += gkj * w / (2.0 * d);
                } else {
                    for inner in self.boundary_terms(i, j) {
                        ap[at] += w / d;
                        ap[inner] -= w / d;
                    }
                }
            }
        }
        // Chain through the centering projection (self-adjoint) and the
        // exponential parameterization.
        let apm = ap.iter().sum::<f64>() / m as f64;
        let mut out = vec![0.0; 2 * m];
        for (o, (a, ki)) in out[..m].iter_mut().zip(ak.iter().zip(&k)) {
            *o = if self.log_permeability { a * ki } else { *a };
        }
        for (o, a) in out[m..].iter_mut().zip(&ap) {
            *o = a - apm;
        }
        out
    }
}
