//! Exact closed-form machinery for the 1-D linear-quadratic Gaussian model:
//! source `N(0, 1)`, unconstrained target `N(mu, sigma^2)`, terminal cost
//! `H(x) = x^2 / 2`.
//!
//! The optimally controlled terminal law is `N(mu / (1 + gamma),
//! (sigma / (1 + gamma))^2)` with `gamma = sigma^2 int_0^1 dt / (lambda_t
//! v(t)^2)` and `v(t)^2 = (1 - t)^2 + t^2 sigma^2`. The GD scheme contracts
//! exponentially with the same integral; TOCFlow (and GN, which coincides
//! with it in one dimension) contracts with the softer effective stiffness
//! `eta = int_0^1 sigma^2 / (lambda_t (v^2 + sigma^2 s(t))) dt`.

use crate::guidance::{stretched_time, WeightSchedule};
use crate::num::{simpson, DEFAULT_PANELS};
use serde::{Deserialize, Serialize};

/// 1-D Gaussian control model with a weight schedule.
#[derive(Debug, Clone)]
pub struct Gaussian1dModel {
    pub mu: f64,
    pub sigma: f64,
    pub schedule: WeightSchedule,
    /// Truncation width for divergent schedule integrals (`gamma >= 1`),
    /// shared with the sampler so oracle and sampler see the same `s(t)`.
    pub eps_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Exact,
    Gd,
    Tocflow,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OracleMoments {
    pub mean: f64,
    pub std: f64,
    pub scheme: Scheme,
}

impl Gaussian1dModel {
    pub fn new(mu: f64, sigma: f64, schedule: WeightSchedule) -> Self {
        assert!(sigma > 0.0);
        Gaussian1dModel { mu, sigma, schedule, eps_s: 1e-3 }
    }

    pub fn constant_lambda(mu: f64, sigma: f64, lambda: f64) -> Self {
        Self::new(mu, sigma, WeightSchedule::constant(lambda))
    }

    pub fn v_sq(&self, t: f64) -> f64 {
        (1.0 - t) * (1.0 - t) + t * t * self.sigma * self.sigma
    }

    pub fn v(&self, t: f64) -> f64 {
        self.v_sq(t).sqrt()
    }

    fn upper_limit(&self) -> f64 {
        if self.schedule.gamma < 1.0 {
            1.0
        } else {
            1.0 - self.eps_s
        }
    }

    /// Scaling factor `gamma = sigma^2 int_0^1 dt / (lambda_t v(t)^2)`,
    /// truncated like the stretched time when the schedule makes it diverge.
    pub fn gamma_lambda(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        simpson(
            |t| s2 / (self.schedule.lambda(t) * self.v_sq(t)),
            0.0,
            self.upper_limit(),
            DEFAULT_PANELS,
        )
    }

    /// Effective stiffness
    /// `eta = int_0^1 sigma^2 / (lambda_t (v^2 + sigma^2 s(t))) dt`.
    pub fn eta_lambda(&self) -> f64 {
        self.eta_lambda_with(|t| stretched_time(&self.schedule, t, self.eps_s))
    }

    fn eta_lambda_with(&self, s: impl Fn(f64) -> f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        simpson(
            |t| s2 / (self.schedule.lambda(t) * (self.v_sq(t) + s2 * s(t))),
            0.0,
            self.upper_limit(),
            DEFAULT_PANELS,
        )
    }

    /// Moments of the optimally controlled terminal law.
    pub fn exact_moments(&self) -> OracleMoments {
        let g = self.gamma_lambda();
        OracleMoments {
            mean: self.mu / (1.0 + g),
            std: self.sigma / (1.0 + g),
            scheme: Scheme::Exact,
        }
    }

    /// Moments produced by the GD or TOCFlow guidance schemes (GN coincides
    /// with TOCFlow in one dimension).
    pub fn scheme_moments(&self, scheme: Scheme) -> OracleMoments {
        match scheme {
            Scheme::Exact => self.exact_moments(),
            Scheme::Gd => {
                let g = self.gamma_lambda();
                OracleMoments {
                    mean: self.mu * (-g).exp(),
                    std: self.sigma * (-g).exp(),
                    scheme,
                }
            }
            Scheme::Tocflow => {
                let e = self.eta_lambda();
                OracleMoments {
                    mean: self.mu * (-e).exp(),
                    std: self.sigma * (-e).exp(),
                    scheme,
                }
            }
        }
    }

    /// Riccati value-function coefficients:
    /// `P(t) = (v^2 (1/sigma^2 + int_t^1 (lambda v^2)^{-1}))^{-1}` with
    /// `P(1) = 1`, and `Q(t) = -P(t) r(t)` with `r(t) = -mu (v/sigma - t)`.
    pub fn riccati_pq(&self, t: f64) -> (f64, f64) {
        assert!((0.0..=1.0).contains(&t));
        let upper = self.upper_limit().max(t);
        let tail = if t >= upper {
            0.0
        } else {
            simpson(
                |s| 1.0 / (self.schedule.lambda(s) * self.v_sq(s)),
                t,
                upper,
                DEFAULT_PANELS,
            )
        };
        let p = 1.0 / (self.v_sq(t) * (1.0 / (self.sigma * self.sigma) + tail));
        let r = -self.mu * (self.v(t) / self.sigma - t);
        (p, -p * r)
    }

    /// Optimal feedback control `a*(x, t) = -(P(t) x + Q(t)) / lambda_t`.
    pub fn riccati_feedback(&self, x: f64, t: f64) -> f64 {
        assert!(t < 1.0, "feedback is defined on [0, 1)");
        let (p, q) = self.riccati_pq(t);
        -(p * x + q) / self.schedule.lambda(t)
    }

    /// Drift slope `alpha(t) = v'(t)/v(t)` of the reference field.
    pub fn alpha(&self, t: f64) -> f64 {
        (t * self.sigma * self.sigma - (1.0 - t)) / self.v_sq(t)
    }

    /// Drift intercept `beta(t) = mu (1 - t alpha(t))`.
    pub fn beta(&self, t: f64) -> f64 {
        self.mu * (1.0 - t * self.alpha(t))
    }

    /// Closed-loop gain/bias pair for the GD scheme: the control is
    /// `a(x, t) = -kappa(t) x - bias(t)`.
    pub fn gd_gain_bias(&self, t: f64) -> (f64, f64) {
        let lam = self.schedule.lambda(t);
        let kappa = self.sigma * self.sigma / (lam * self.v_sq(t));
        let bias = -kappa * self.mu * t + self.sigma * self.mu / (lam * self.v(t));
        (kappa, bias)
    }

    /// Closed-loop gain/bias pair for TOCFlow: the GD pair damped by
    /// `tau*(t) = v^2 / (v^2 + s(t) sigma^2)`.
    pub fn toc_gain_bias(&self, t: f64) -> (f64, f64) {
        let s = stretched_time(&self.schedule, t.min(1.0), self.eps_s);
        let tau = self.v_sq(t) / (self.v_sq(t) + s * self.sigma * self.sigma);
        let (kappa, bias) = self.gd_gain_bias(t);
        (tau * kappa, tau * bias)
    }

    /// Closed-loop gain/bias pair for the exact Riccati feedback.
    pub fn riccati_gain_bias(&self, t: f64) -> (f64, f64) {
        let (p, q) = self.riccati_pq(t);
        let lam = self.schedule.lambda(t);
        (p / lam, q / lam)
    }

    /// Integrates the closed-loop moment ODEs
    /// `m' = (alpha - kappa) m + beta - bias`, `V' = 2 (alpha - kappa) V`
    /// from `(0, 1)` at `t = 0` with Heun. Returns `(mean, std)` at `t = 1`.
    pub fn moment_simulate(
        &self,
        gain: &dyn Fn(f64) -> f64,
        bias: &dyn Fn(f64) -> f64,
        steps: usize,
    ) -> (f64, f64) {
        assert!(steps >= 2);
        let h = 1.0 / steps as f64;
        let mut m = 0.0f64;
        let mut var = 1.0f64;
        let rhs = |t: f64, m: f64, v: f64| {
            let a = self.alpha(t) - gain(t);
            (a * m + self.beta(t) - bias(t), 2.0 * a * v)
        };
        for i in 0..steps {
            let t = i as f64 * h;
            let (dm0, dv0) = rhs(t, m, var);
            let (dm1, dv1) = rhs(t + h, m + h * dm0, var + h * dv0);
            m += 0.5 * h * (dm0 + dm1);
            var += 0.5 * h * (dv0 + dv1);
        }
        (m, var.max(0.0).sqrt())
    }

    /// Expected optimal control energy computed along two independent routes:
    /// in Eulerian coordinates and in the initial co-moving frame where the
    /// metric is `C_t = v(t)^2`. The two agree identically for the optimal
    /// feedback; both are returned for the consistency check.
    pub fn energy_equivalence(&self, steps: usize) -> (f64, f64) {
        assert!(steps >= 2);
        let h = 1.0 / steps as f64;

        // Eulerian route: track (m, V) of the controlled state.
        let euler_integrand = |t: f64, m: f64, v: f64| {
            let (p, q) = self.riccati_pq(t);
            let lam = self.schedule.lambda(t);
            (p * p * v + (p * m + q) * (p * m + q)) / (2.0 * lam)
        };
        let mut m = 0.0f64;
        let mut var = 1.0f64;
        let mut eulerian = 0.0f64;
        for i in 0..steps {
            let t = i as f64 * h;
            let f0 = euler_integrand(t, m, var);
            let (k0, b0) = self.riccati_gain_bias(t);
            let dm0 = (self.alpha(t) - k0) * m + self.beta(t) - b0;
            let dv0 = 2.0 * (self.alpha(t) - k0) * var;
            let (k1, b1) = self.riccati_gain_bias(t + h);
            let m1 = m + h * dm0;
            let v1 = var + h * dv0;
            let dm1 = (self.alpha(t + h) - k1) * m1 + self.beta(t + h) - b1;
            let dv1 = 2.0 * (self.alpha(t + h) - k1) * v1;
            let m_next = m + 0.5 * h * (dm0 + dm1);
            let v_next = var + 0.5 * h * (dv0 + dv1);
            let f1 = euler_integrand(t + h, m_next, v_next);
            eulerian += 0.5 * h * (f0 + f1);
            m = m_next;
            var = v_next;
        }

        // Co-moving route: track the pulled-back moments under the relative
        // velocity w(z, t) = -(P/lambda) z - (P mu t + Q) / (lambda v), and
        // weight the kinetic energy by C_t = v(t)^2.
        let comoving_rhs = |t: f64, mt: f64| {
            let (p, q) = self.riccati_pq(t);
            let lam = self.schedule.lambda(t);
            let gain = p / lam;
            let bias = (p * self.mu * t + q) / (lam * self.v(t));
            (-gain * mt - bias, gain, bias)
        };
        let comoving_integrand = |t: f64, mt: f64, vt: f64| {
            let (_, gain, bias) = comoving_rhs(t, mt);
            let w_sq = gain * gain * vt + (gain * mt + bias) * (gain * mt + bias);
            0.5 * self.schedule.lambda(t) * self.v_sq(t) * w_sq
        };
        let mut mt = 0.0f64;
        let mut vt = 1.0f64;
        let mut comoving = 0.0f64;
        for i in 0..steps {
            let t = i as f64 * h;
            let f0 = comoving_integrand(t, mt, vt);
            let (dm0, g0, _) = comoving_rhs(t, mt);
            let dv0 = -2.0 * g0 * vt;
            let (dm1, g1, _) = comoving_rhs(t + h, mt + h * dm0);
            let dv1 = -2.0 * g1 * (vt + h * dv0);
            let m_next = mt + 0.5 * h * (dm0 + dm1);
            let v_next = vt + 0.5 * h * (dv0 + dv1);
            let f1 = comoving_integrand(t + h, m_next, v_next);
            comoving += 0.5 * h * (f0 + f1);
            mt = m_next;
            vt = v_next;
        }
        (eulerian, comoving)
    }

    /// Flow-Jacobian bounds `c- = min_t v(t)` and `c+ = max_t v(t)` on a
    /// 4096-point grid (in 1-D the reference Jacobian from time 0 is `v(t)`).
    pub fn jacobian_bounds(&self) -> (f64, f64) {
        let grid = 4096;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=grid {
            let v = self.v(i as f64 / grid as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Terminal cost, expected cost and the transport-cost bounds it must
    /// respect: `int H dnu + (c-^2 l/2c+^2) W2^2 <= achieved <= int H dnu +
    /// (c+^2 L/2c-^2) W2^2` against the reference law `N(mu, sigma^2)`.
    pub fn cost_sandwich(&self, steps: usize) -> CostSandwich {
        let exact = self.exact_moments();
        let terminal = 0.5 * (exact.mean * exact.mean + exact.std * exact.std);
        let (energy, _) = self.energy_equivalence(steps);
        let (c_lo, c_hi) = self.jacobian_bounds();
        let (lam_lo, lam_hi) = self.schedule_bounds();
        let w2 = w2_gaussian(self.mu, self.sigma, exact.mean, exact.std);
        CostSandwich {
            lower: terminal + c_lo * c_lo * lam_lo / (2.0 * c_hi * c_hi) * w2 * w2,
            achieved: terminal + energy,
            upper: terminal + c_hi * c_hi * lam_hi / (2.0 * c_lo * c_lo) * w2 * w2,
        }
    }

    fn schedule_bounds(&self) -> (f64, f64) {
        let grid = 4096;
        let upper = self.upper_limit();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=grid {
            let lam = self.schedule.lambda(upper * i as f64 / grid as f64);
            lo = lo.min(lam);
            hi = hi.max(lam);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CostSandwich {
    pub lower: f64,
    pub achieved: f64,
    pub upper: f64,
}

/// 2-Wasserstein distance between 1-D Gaussians:
/// `sqrt((mu1 - mu2)^2 + (s1 - s2)^2)`.
pub fn w2_gaussian(mu1: f64, s1: f64, mu2: f64, s2: f64) -> f64 {
    assert!(s1 >= 0.0 && s2 >= 0.0);
    ((mu1 - mu2) * (mu1 - mu2) + (s1 - s2) * (s1 - s2)).sqrt()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Fig1Row {
    pub lambda: f64,
    pub exact: f64,
    pub gd: f64,
    pub toc: f64,
}

/// Terminal standard deviation of the three schemes across a grid of
/// constant weight schedules.
pub fn fig1_curve(sigma: f64, mu: f64, lambdas: &[f64]) -> Vec<Fig1Row> {
    lambdas
        .iter()
        .map(|&lambda| {
            let model = Gaussian1dModel::constant_lambda(mu, sigma, lambda);
            Fig1Row {
                lambda,
                exact: model.exact_moments().std,
                gd: model.scheme_moments(Scheme::Gd).std,
                toc: model.scheme_moments(Scheme::Tocflow).std,
            }
        })
        .collect()
}
