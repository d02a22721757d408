//! Independent reference values shared by integration tests and the
//! acceptance harness. Nothing here calls into the quadrature of the crate.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton on P_n.
pub fn gl(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// ∫_0^b f with panels graded geometrically towards 0.
pub fn graded<F: Fn(f64) -> f64>(f: F, b: f64, levels: usize, rule: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    let mut hi = b;
    for lvl in 0..=levels {
        let lo = if lvl == levels { 0.0 } else { hi * 0.5 };
        let (c, h) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        s += rule.iter().map(|(x, w)| w * h * f(c + h * x)).sum::<f64>();
        hi = lo;
    }
    s
}

/// π^{-3} ∫_{[0,π]^3} dk / (3 - Σ cos k_j) = W/3 with Watson's constant W,
/// reduced to two dimensions by (1/π)∫_0^π dk/(a - cos k) = 1/sqrt(a² - 1).
pub fn cube_integral() -> f64 {
    let rule = gl(24);
    let inner = |k1: f64| graded(|k2| {
        let am1 = 2.0 * ((0.5 * k1).sin().powi(2) + (0.5 * k2).sin().powi(2));
        1.0 / (am1 * (am1 + 2.0)).sqrt()
    }, PI, 50, &rule);
    graded(inner, PI, 50, &rule) / (PI * PI)
}

/// G(0; 6 + i0) of the d = 3 Laplacian E(k) = 2 Σ cos k_j.
pub fn watson_green() -> f64 {
    -0.5 * cube_integral()
}

/// Frozen value of [`watson_green`].
pub const WATSON_GREEN: f64 = -0.252_731_009_858_66;
