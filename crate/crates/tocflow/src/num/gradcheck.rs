/// Central-difference check of an analytic gradient. Returns the maximum over
/// coordinates of `|grad_i - fd_i| / max(|fd_i|, 1e-12)` where `fd_i` is the
/// symmetric difference quotient of `f` at step `eps`.
pub fn grad_check<F, G>(f: F, grad: G, x: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    assert!(eps > 0.0, "grad_check needs eps > 0");
    let g = grad(x);
    assert_eq!(g.len(), x.len(), "gradient dimension mismatch");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe);
        probe[i] = orig - eps;
        let minus = f(&probe);
        probe[i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        let rel = (g[i] - fd).abs() / fd.abs().max(1e-12);
        worst = worst.max(rel);
    }
    worst
}
