//! Quadrature rules: Gauss–Legendre on [0,1] and a Duffy-collapsed tensor
//! rule on the unit reference triangle.

use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on [0, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor Gauss rule collapsed onto the triangle {ξ,η ≥ 0, ξ+η ≤ 1} via
/// ξ = u, η = v(1−u). An n×n rule integrates total degree ≤ n−1 polynomials
/// exactly (the Jacobian adds one u-degree; Gauss-n is exact to 2n−1).
pub fn duffy_triangle(n: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(n);
    let mut pts = Vec::with_capacity(n * n);
    let mut w = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = gx[i];
            let v = gx[j];
            pts.push([u, v * (1.0 - u)]);
            w.push(gw[i] * gw[j] * (1.0 - u));
        }
    }
    (pts, w)
}

/// Default volume rule: 7×7 Duffy (exact through total degree 6 on straight
/// elements, ample for curved geometry at the crate's mesh sizes).
pub fn triangle_rule() -> &'static (Vec<[f64; 2]>, Vec<f64>) {
    static RULE: OnceLock<(Vec<[f64; 2]>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| duffy_triangle(7))
}

/// Default edge rule: 6-point Gauss on [0,1].
pub fn edge_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(6))
}
