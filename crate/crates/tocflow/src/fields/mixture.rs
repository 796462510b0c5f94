use super::VelocityField;
use crate::error::NumError;
use crate::num::{dot, sym_eig, Matrix};
use std::f64::consts::PI;

/// Regularizer added to every interpolant covariance `V_j(t)` before
/// inversion; keeps `t = 1` well-posed for rank-deficient components.
pub const COV_EPS: f64 = 1e-10;

/// One Gaussian component, held in spectral form: the covariance is
/// `S = B diag(eigvals) B^T + complement_eig * (I - B B^T)` with orthonormal
/// columns in `B`. Full-rank components have `B` square; sample-fitted
/// components keep a thin basis so high-dimensional fields stay cheap.
#[derive(Debug, Clone)]
pub struct MixtureComponent {
    mean: Vec<f64>,
    log_weight: f64,
    basis: Matrix,
    eigvals: Vec<f64>,
    complement_eig: f64,
}

impl MixtureComponent {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    /// Applies the covariance `S` to a vector; used by tests and samplers.
    pub fn apply_cov(&self, x: &[f64]) -> Vec<f64> {
        let c = self.basis.matvec_t(x);
        let mut out: Vec<f64> = x.iter().map(|v| v * self.complement_eig).collect();
        for (i, ci) in c.iter().enumerate() {
            let w = (self.eigvals[i] - self.complement_eig) * ci;
            for (o, b) in out.iter_mut().zip(self.basis_column(i)) {
                *o += w * b;
            }
        }
        out
    }

    fn basis_column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let cols = self.basis.cols();
        self.basis.data().iter().skip(j).step_by(cols).copied()
    }
}

/// Closed-form conditional-mean velocity field for a Gaussian-mixture target
/// under the linear interpolant from a standard Gaussian source.
///
/// With `V_j(t) = (1-t)^2 I + t^2 S_j + eps I` and
/// `B_j(t) = (t S_j - (1-t) I) V_j(t)^{-1}`, the drift is
/// `b(x, t) = sum_j p_j(x, t) (m_j + B_j(t) (x - t m_j))` where the posterior
/// weights `p_j` are softmax-normalized Gaussian responsibilities.
#[derive(Debug, Clone)]
pub struct GaussianMixtureField {
    comps: Vec<MixtureComponent>,
    dim: usize,
}

/// Per-component scratch produced once per `(x, t)` evaluation.
struct CompEval {
    posterior: f64,
    /// Component conditional-mean velocity `m_j + B_j(t)(x - t m_j)`.
    cond_velocity: Vec<f64>,
    /// `-V_j(t)^{-1} (x - t m_j)`, the log-density gradient.
    log_density_grad: Vec<f64>,
}

impl GaussianMixtureField {
    /// Builds a mixture from lower-triangular covariance factors
    /// (`S_j = L_j L_j^T`). Factors are expanded to a full eigenbasis.
    pub fn from_cholesky(
        weights: &[f64],
        means: &[Vec<f64>],
        chols: &[Matrix],
    ) -> Result<Self, NumError> {
        assert_eq!(weights.len(), means.len());
        assert_eq!(weights.len(), chols.len());
        assert!(!weights.is_empty(), "mixture needs at least one component");
        let dim = means[0].len();
        let total: f64 = weights.iter().sum();
        assert!(weights.iter().all(|w| *w > 0.0), "weights must be positive");
        let mut comps = Vec::with_capacity(weights.len());
        for ((w, m), l) in weights.iter().zip(means).zip(chols) {
            assert_eq!(m.len(), dim);
            assert_eq!(l.rows(), dim);
            let s = l.matmul(&l.transpose());
            let (eigvals, basis) = sym_eig(&s)?;
            let eigvals = eigvals.into_iter().map(|v| v.max(0.0)).collect();
            comps.push(MixtureComponent {
                mean: m.clone(),
                log_weight: (w / total).ln(),
                basis,
                eigvals,
                complement_eig: 0.0,
            });
        }
        Ok(GaussianMixtureField { comps, dim })
    }

    /// Builds a single-component field from a thin factor `F` (d x m) with
    /// `S = F F^T + floor * I`. Only the m-dimensional range of `F` needs an
    /// eigenbasis, so this stays tractable for large `d`.
    pub fn from_low_rank_factor(
        mean: Vec<f64>,
        factor: &Matrix,
        floor: f64,
    ) -> Result<Self, NumError> {
        let dim = mean.len();
        assert_eq!(factor.rows(), dim);
        assert!(floor >= 0.0);
        let gram = factor.transpose().matmul(factor);
        let (gram_eigs, gram_vecs) = sym_eig(&gram)?;
        let scale = gram_eigs.first().copied().unwrap_or(0.0).max(1e-300);
        let mut basis_cols: Vec<Vec<f64>> = Vec::new();
        let mut eigvals = Vec::new();
        for (k, lam) in gram_eigs.iter().enumerate() {
            if *lam <= 1e-12 * scale {
                break;
            }
            // u_k = F w_k / sqrt(lam_k)
            let wk: Vec<f64> = (0..gram.rows()).map(|r| gram_vecs[(r, k)]).collect();
            let mut col = factor.matvec(&wk);
            let inv = 1.0 / lam.sqrt();
            for c in col.iter_mut() {
                *c *= inv;
            }
            basis_cols.push(col);
            eigvals.push(lam + floor);
        }
        let m = basis_cols.len().max(1);
        let mut basis = Matrix::zeros(dim, m);
        for (j, col) in basis_cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                basis[(i, j)] = *v;
            }
        }
        if basis_cols.is_empty() {
            eigvals.push(floor);
        }
        let comp = MixtureComponent {
            mean,
            log_weight: 0.0,
            basis,
            eigvals,
            complement_eig: floor,
        };
        Ok(GaussianMixtureField { comps: vec![comp], dim })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.comps
    }

    /// Posterior weights `p_j(x, t)`, softmax-normalized with log-sum-exp
    /// stabilization. Sums to one to round-off.
    pub fn posterior(&self, x: &[f64], t: f64) -> Vec<f64> {
        if self.comps.len() == 1 {
            return vec![1.0];
        }
        let logs: Vec<f64> = self
            .comps
            .iter()
            .map(|c| c.log_weight + self.log_density(c, x, t))
            .collect();
        softmax(&logs)
    }

    fn log_density(&self, comp: &MixtureComponent, x: &[f64], t: f64) -> f64 {
        let (centered, coeffs, resid) = self.split(comp, x, t);
        let _ = centered;
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for (ci, lam) in coeffs.iter().zip(&comp.eigvals) {
            let v = interp_var(t, *lam);
            quad += ci * ci / v;
            logdet += v.ln();
        }
        let v_perp = interp_var(t, comp.complement_eig);
        let resid_sq = dot(&resid, &resid);
        quad += resid_sq / v_perp;
        logdet += (self.dim - comp.eigvals.len()) as f64 * v_perp.ln();
        -0.5 * (quad + logdet + self.dim as f64 * (2.0 * PI).ln())
    }

    /// Splits `x - t m` into basis coefficients and the orthogonal remainder.
    /// Full-rank bases have an empty complement, so the remainder is exactly
    /// zero there rather than round-off noise.
    fn split(&self, comp: &MixtureComponent, x: &[f64], t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let centered: Vec<f64> =
            x.iter().zip(&comp.mean).map(|(xi, mi)| xi - t * mi).collect();
        let coeffs = comp.basis.matvec_t(&centered);
        if comp.basis.cols() == self.dim {
            let resid = vec![0.0; self.dim];
            return (centered, coeffs, resid);
        }
        let mut resid = centered.clone();
        let back = comp.basis.matvec(&coeffs);
        for (r, b) in resid.iter_mut().zip(&back) {
            *r -= b;
        }
        (centered, coeffs, resid)
    }

    /// Applies `B_j(t)` (symmetric) to a vector.
    fn apply_b(&self, comp: &MixtureComponent, t: f64, v: &[f64]) -> Vec<f64> {
        let coeffs = comp.basis.matvec_t(v);
        let full_rank = comp.basis.cols() == self.dim;
        let b_perp = if full_rank { 0.0 } else { b_coef(t, comp.complement_eig) };
        let mut out: Vec<f64> = v.iter().map(|vi| vi * b_perp).collect();
        for (j, cj) in coeffs.iter().enumerate() {
            let w = (b_coef(t, comp.eigvals[j]) - b_perp) * cj;
            for (o, b) in out.iter_mut().zip(comp.basis_column(j)) {
                *o += w * b;
            }
        }
        out
    }

    fn eval_components(&self, x: &[f64], t: f64) -> Vec<CompEval> {
        let single = self.comps.len() == 1;
        let posts = self.posterior(x, t);
        let mut evals = Vec::with_capacity(self.comps.len());
        for (comp, post) in self.comps.iter().zip(posts) {
            let (_centered, coeffs, resid) = self.split(comp, x, t);
            let v_perp = interp_var(t, comp.complement_eig);
            let b_perp = b_coef(t, comp.complement_eig);
            let mut cond_velocity = comp.mean.clone();
            for (cv, r) in cond_velocity.iter_mut().zip(&resid) {
                *cv += b_perp * r;
            }
            // resid is orthogonal to the basis, so the two gradient parts
            // never overlap: -V^{-1}(x - t m) splits cleanly.
            let mut grad: Vec<f64> = if single {
                Vec::new()
            } else {
                resid.iter().map(|r| -r / v_perp).collect()
            };
            for (j, cj) in coeffs.iter().enumerate() {
                let lam = comp.eigvals[j];
                let wb = b_coef(t, lam) * cj;
                let wg = -cj / interp_var(t, lam);
                for (i, b) in comp.basis_column(j).enumerate() {
                    cond_velocity[i] += wb * b;
                    if !single {
                        grad[i] += wg * b;
                    }
                }
            }
            evals.push(CompEval { posterior: post, cond_velocity, log_density_grad: grad });
        }
        evals
    }
}

/// Eigenvalue of `V(t) = (1-t)^2 I + t^2 S + eps I` for covariance eigenvalue
/// `lam`.
fn interp_var(t: f64, lam: f64) -> f64 {
    (1.0 - t) * (1.0 - t) + t * t * lam + COV_EPS
}

/// Eigenvalue of `B(t) = (t S - (1-t) I) V(t)^{-1}`.
fn b_coef(t: f64, lam: f64) -> f64 {
    (t * lam - (1.0 - t)) / interp_var(t, lam)
}

fn softmax(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl VelocityField for GaussianMixtureField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let evals = self.eval_components(x, t);
        let mut out = vec![0.0; self.dim];
        for e in &evals {
            for (o, cv) in out.iter_mut().zip(&e.cond_velocity) {
                *o += e.posterior * cv;
            }
        }
        out
    }

    fn jvp(&self, x: &[f64], t: f64, v: &[f64]) -> Vec<f64> {
        let evals = self.eval_components(x, t);
        let mut out = vec![0.0; self.dim];
        // Sum_j p_j B_j v.
        for (comp, e) in self.comps.iter().zip(&evals) {
            let bv = self.apply_b(comp, t, v);
            for (o, b) in out.iter_mut().zip(&bv) {
                *o += e.posterior * b;
            }
        }
        if self.comps.len() > 1 {
            // Posterior variation: grad p_j = p_j (q_j - sum_k p_k q_k).
            let mut qbar = vec![0.0; self.dim];
            for e in &evals {
                for (q, g) in qbar.iter_mut().zip(&e.log_density_grad) {
                    *q += e.posterior * g;
                }
            }
            for e in &evals {
                let mut gdotv = 0.0;
                for ((g, q), vi) in e.log_density_grad.iter().zip(&qbar).zip(v) {
                    gdotv += e.posterior * (g - q) * vi;
                }
                for (o, cv) in out.iter_mut().zip(&e.cond_velocity) {
                    *o += gdotv * cv;
                }
            }
        }
        out
    }

    fn vjp(&self, x: &[f64], t: f64, u: &[f64]) -> Vec<f64> {
        let evals = self.eval_components(x, t);
        let mut out = vec![0.0; self.dim];
        // B_j is symmetric, so the transposed term mirrors the jvp.
        for (comp, e) in self.comps.iter().zip(&evals) {
            let bu = self.apply_b(comp, t, u);
            for (o, b) in out.iter_mut().zip(&bu) {
                *o += e.posterior * b;
            }
        }
        if self.comps.len() > 1 {
            let mut qbar = vec![0.0; self.dim];
            for e in &evals {
                for (q, g) in qbar.iter_mut().zip(&e.log_density_grad) {
                    *q += e.posterior * g;
                }
            }
            for e in &evals {
                let cdotu = dot(&e.cond_velocity, u);
                for ((o, g), q) in out.iter_mut().zip(&e.log_density_grad).zip(&qbar) {
                    *o += e.posterior * (g - q) * cdotu;
                }
            }
        }
        out
    }
}
