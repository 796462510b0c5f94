/// Default panel count for schedule integrals; the integrands are smooth on
/// [0, 1] and this comfortably exceeds every tolerance in the crate.
pub const DEFAULT_PANELS: usize = 1024;

/// Composite Simpson quadrature of `f` on `[a, b]` with `n` panels (`n` even,
/// `n >= 2`). Exact for polynomials of degree <= 3.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n % 2 == 0, "simpson needs an even panel count >= 2");
    assert!(a <= b, "simpson needs a <= b");
    if a == b {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let t = a + h * i as f64;
        acc += if i % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
    }
    acc * h / 3.0
}
