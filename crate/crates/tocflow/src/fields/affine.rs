use super::VelocityField;

/// Closed-form 1-D reference field transporting `N(0, 1)` to `N(mu, sigma^2)`
/// along the linear interpolant: `b(x, t) = alpha(t) x + beta(t)` with
/// `alpha = v'(t)/v(t)`, `beta = mu (1 - t alpha)` and
/// `v(t)^2 = (1 - t)^2 + t^2 sigma^2`.
#[derive(Debug, Clone)]
pub struct Affine1dField {
    pub mu: f64,
    pub sigma: f64,
}

impl Affine1dField {
    pub fn new(mu: f64, sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        Affine1dField { mu, sigma }
    }

    /// Interpolant standard deviation `v(t)`.
    pub fn v(&self, t: f64) -> f64 {
        self.v_sq(t).sqrt()
    }

    pub fn v_sq(&self, t: f64) -> f64 {
        (1.0 - t) * (1.0 - t) + t * t * self.sigma * self.sigma
    }

    /// Drift slope `alpha(t) = v'(t)/v(t) = (t sigma^2 - (1 - t)) / v(t)^2`.
    pub fn alpha(&self, t: f64) -> f64 {
        (t * self.sigma * self.sigma - (1.0 - t)) / self.v_sq(t)
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.mu * (1.0 - t * self.alpha(t))
    }

    /// Exact flow map from `t` to 1: `(sigma / v(t)) (x - mu t) + mu`.
    pub fn flow_to_one(&self, x: f64, t: f64) -> f64 {
        self.sigma / self.v(t) * (x - self.mu * t) + self.mu
    }

    /// Exact flow Jacobian from `t` to 1: `sigma / v(t)`.
    pub fn jacobian_to_one(&self, t: f64) -> f64 {
        self.sigma / self.v(t)
    }
}

impl VelocityField for Affine1dField {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        vec![self.alpha(t) * x[0] + self.beta(t)]
    }
    fn jvp(&self, _x: &[f64], t: f64, v: &[f64]) -> Vec<f64> {
        vec![self.alpha(t) * v[0]]
    }
    fn vjp(&self, _x: &[f64], t: f64, u: &[f64]) -> Vec<f64> {
        vec![self.alpha(t) * u[0]]
    }
}
