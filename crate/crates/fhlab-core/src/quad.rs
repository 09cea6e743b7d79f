//! Quadrature rules: Gauss-Legendre nodes by Newton iteration, the
//! theta-substitution trapezoid rule for arcsine/semicircle weights, and a
//! helper for integrals with an interior logarithmic singularity.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    for i in 0..n {
        nodes[i] = c + h * nodes[i];
        weights[i] *= h;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `(1/pi) * integral_0^pi g(theta) d(theta)` by the uniform trapezoid rule
/// with `m` panels; spectrally accurate for smooth even-periodic integrands.
pub fn trapezoid_theta(m: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
    let h = PI / m as f64;
    let mut s = 0.5 * (g(0.0) + g(PI));
    for j in 1..m {
        s += g(j as f64 * h);
    }
    s * h / PI
}

/// `integral_0^a h(y) dy` where `h(y) = smooth(y) * log-type singular factor
/// at y = 0`; uses the substitution `y = a t^4` so the transformed integrand
/// behaves like `t^3 log t` at the singular endpoint.
pub fn integrate_log_endpoint(a: f64, n: usize, h: impl Fn(f64) -> f64) -> f64 {
    let (t, w) = gauss_legendre(n, 0.0, 1.0);
    let mut s = 0.0;
    for i in 0..n {
        let t3 = t[i] * t[i] * t[i];
        let y = a * t3 * t[i];
        s += w[i] * h(y) * 4.0 * a * t3;
    }
    s
}
