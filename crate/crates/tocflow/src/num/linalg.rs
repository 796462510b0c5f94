use super::{axpy, dot, norm2, Matrix};
use crate::error::NumError;

/// Lower-triangular Cholesky factor `L` with `L L^T = A`.
pub fn cholesky(a: &Matrix) -> Result<Matrix, NumError> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "cholesky needs a square matrix");
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(NumError::NotPositiveDefinite { row: i, pivot: s });
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            x[i] -= lik * x[k];
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[(k, i)] * x[k];
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// How a conjugate-gradient solve terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgOutcome {
    Converged,
    MaxIterations,
    /// NaN or non-positive curvature encountered; the result holds the last
    /// finite iterate so guidance can degrade gracefully mid-sampling.
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub outcome: CgOutcome,
    pub residual_norm: f64,
}

impl CgResult {
    pub fn converged(&self) -> bool {
        self.outcome == CgOutcome::Converged
    }
}

/// Conjugate gradient on a symmetric positive-definite operator given as a
/// matrix-free callback. Stops when `||A x - b|| <= tol * ||b||` or after
/// `max_iter` iterations.
pub fn cg_solve<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> CgResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return CgResult { x, iterations: 0, outcome: CgOutcome::Converged, residual_norm: 0.0 };
    }
    let threshold = tol * b_norm;
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    for iter in 0..max_iter {
        if rs.sqrt() <= threshold {
            return CgResult {
                x,
                iterations: iter,
                outcome: CgOutcome::Converged,
                residual_norm: rs.sqrt(),
            };
        }
        let ap = apply(&p);
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() || curvature <= 0.0 {
            return CgResult {
                x,
                iterations: iter,
                outcome: CgOutcome::Breakdown,
                residual_norm: rs.sqrt(),
            };
        }
        let alpha = rs / curvature;
        let mut x_next = x.clone();
        axpy(alpha, &p, &mut x_next);
        let mut r_next = r.clone();
        axpy(-alpha, &ap, &mut r_next);
        let rs_next = dot(&r_next, &r_next);
        if !rs_next.is_finite() {
            return CgResult {
                x,
                iterations: iter,
                outcome: CgOutcome::Breakdown,
                residual_norm: rs.sqrt(),
            };
        }
        let beta = rs_next / rs;
        x = x_next;
        r = r_next;
        rs = rs_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    let outcome = if rs.sqrt() <= threshold { CgOutcome::Converged } else { CgOutcome::MaxIterations };
    CgResult { x, iterations: max_iter, outcome, residual_norm: rs.sqrt() }
}

/// Symmetric eigendecomposition by the cyclic Jacobi method. Returns
/// `(eigenvalues, V)` with `A = V diag(eigenvalues) V^T` and orthonormal
/// columns in `V`; eigenvalues are sorted descending.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix), NumError> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "sym_eig needs a square matrix");
    let asym = a.asymmetry();
    let scale = a.frobenius_norm().max(1.0);
    if asym > 1e-9 * scale {
        return Err(NumError::Shape(format!("matrix not symmetric: asymmetry {asym:e}")));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m[(i, i)], i)).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let eigvals: Vec<f64> = pairs.iter().map(|(val, _)| *val).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, (_, old_col)) in pairs.iter().enumerate() {
        for row in 0..n {
            vectors[(row, new_col)] = v[(row, *old_col)];
        }
    }
    Ok((eigvals, vectors))
}
