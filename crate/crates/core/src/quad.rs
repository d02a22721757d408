//! One-dimensional quadrature: Gauss-Legendre rules and a globally adaptive
//! Gauss-Kronrod 7/15 integrator for vector-valued complex integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::linalg::{C64, ZERO};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|v| v * h).collect())
}

#[derive(Clone, Copy, Debug)]
pub struct GkOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on panel width (oscillation cap).
    pub max_width: f64,
    pub max_evals: usize,
}

impl Default for GkOptions {
    fn default() -> Self {
        GkOptions { abs_tol: 1e-10, rel_tol: 1e-10, max_width: f64::INFINITY, max_evals: 200_000 }
    }
}

#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: Vec<C64>,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    err: f64,
    val: Vec<C64>,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err).then(o.a.total_cmp(&self.a))
    }
}

/// The 15 Kronrod abscissae of [a, b], Gauss points at odd positions.
fn panel_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; 15];
    for i in 0..7 {
        x[2 * i] = c - h * XGK[i];
        x[2 * i + 1] = c + h * XGK[i];
    }
    x[14] = c;
    x
}

fn node_weights(i: usize) -> (f64, f64) {
    let j = if i == 14 { 7 } else { i / 2 };
    let g = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
    (WGK[j], g)
}

/// Kronrod value and QUADPACK-style error from node values `fx[i * m + j]`.
fn panel_from(a: f64, b: f64, fx: &[C64], m: usize) -> Panel {
    let h = 0.5 * (b - a);
    let mut k = vec![ZERO; m];
    let mut g = vec![ZERO; m];
    for i in 0..15 {
        let (wk, wg) = node_weights(i);
        let row = &fx[i * m..(i + 1) * m];
        for j in 0..m {
            k[j] += row[j] * wk;
            if wg != 0.0 {
                g[j] += row[j] * wg;
            }
        }
    }
    let mut err: f64 = 0.0;
    for j in 0..m {
        let mean = k[j] * 0.5;
        let mut resasc = 0.0;
        for i in 0..15 {
            resasc += node_weights(i).0 * (fx[i * m + j] - mean).norm();
        }
        resasc *= h.abs();
        k[j] *= h;
        g[j] *= h;
        let mut e = (k[j] - g[j]).norm();
        if resasc > 0.0 && e > 0.0 {
            e = resasc * (200.0 * e / resasc).powf(1.5).min(1.0);
        }
        err = err.max(e);
    }
    Panel { a, b, err, val: k }
}

fn initial_intervals(points: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let pieces = if max_width.is_finite() { ((b - a) / max_width).ceil().max(1.0) as usize } else { 1 };
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let lo = a + p as f64 * h;
            let hi = if p + 1 == pieces { b } else { lo + h };
            out.push((lo, hi));
        }
    }
    out
}

/// Core adaptive loop; `eval` maps a batch of abscissae to their values
/// laid out as `[node][component]`.
fn gk_driver<E: FnMut(&[f64]) -> Vec<C64>>(mut eval: E, points: &[f64], m: usize, opts: &GkOptions) -> QuadResult {
    let mut evals = 0usize;
    let mut panels_of = |iv: &[(f64, f64)], evals: &mut usize| -> Vec<Panel> {
        let xs: Vec<f64> = iv.iter().flat_map(|&(a, b)| panel_nodes(a, b)).collect();
        *evals += xs.len();
        let fx = eval(&xs);
        iv.iter().enumerate().map(|(p, &(a, b))| panel_from(a, b, &fx[p * 15 * m..(p + 1) * 15 * m], m)).collect()
    };
    let mut heap: BinaryHeap<Panel> = panels_of(&initial_intervals(points, opts.max_width), &mut evals).into_iter().collect();
    let sum = |heap: &BinaryHeap<Panel>| {
        let mut v = vec![ZERO; m];
        let mut e = 0.0;
        for p in heap.iter() {
            for j in 0..m {
                v[j] += p.val[j];
            }
            e += p.err;
        }
        (v, e)
    };
    let (mut total, mut err) = sum(&heap);
    let mut refreshes = 0usize;
    loop {
        let mag = total.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = opts.abs_tol.max(opts.rel_tol * mag);
        if err <= tol {
            return QuadResult { value: total, error: err, evals, converged: true };
        }
        if evals + 30 > opts.max_evals {
            return QuadResult { value: total, error: err, evals, converged: false };
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => return QuadResult { value: total, error: err, evals, converged: true },
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) < 1e-14 * (1.0 + worst.a.abs()) {
            // Panel cannot be split further; accept its error.
            let (mut v, e) = sum(&heap);
            for j in 0..m {
                v[j] += worst.val[j];
            }
            return QuadResult { value: v, error: e + worst.err, evals, converged: false };
        }
        let halves = panels_of(&[(worst.a, mid), (mid, worst.b)], &mut evals);
        for p in &halves {
            for j in 0..m {
                total[j] += p.val[j];
            }
            err += p.err;
        }
        for j in 0..m {
            total[j] -= worst.val[j];
        }
        err -= worst.err;
        heap.extend(halves);
        refreshes += 1;
        if refreshes % 64 == 0 {
            // Re-sum to stop round-off drift in the running totals.
            let (v, e) = sum(&heap);
            total = v;
            err = e;
        }
    }
}

/// Globally adaptive GK 7/15 over the intervals delimited by `points`
/// (sorted, first and last are the integration limits).
///
/// `f(x, out)` writes the `m` integrand components at `x`. The error is the
/// sum over panels of the max-norm Kronrod/Gauss difference.
pub fn gk_adaptive<F: FnMut(f64, &mut [C64])>(mut f: F, points: &[f64], m: usize, opts: &GkOptions) -> QuadResult {
    let eval = |xs: &[f64]| {
        let mut out = vec![ZERO; xs.len() * m];
        for (i, &x) in xs.iter().enumerate() {
            f(x, &mut out[i * m..(i + 1) * m]);
        }
        out
    };
    gk_driver(eval, points, m, opts)
}

/// As [`gk_adaptive`], evaluating the nodes of each refinement step in
/// parallel. Results do not depend on the thread count.
pub fn gk_adaptive_par<F: Fn(f64, &mut [C64]) + Sync>(f: F, points: &[f64], m: usize, opts: &GkOptions) -> QuadResult {
    let eval = |xs: &[f64]| {
        let mut out = vec![ZERO; xs.len() * m];
        out.par_chunks_mut(m).zip(xs.par_iter()).for_each(|(o, &x)| f(x, o));
        out
    };
    gk_driver(eval, points, m, opts)
}

/// Scalar convenience wrapper.
pub fn gk_scalar<F: FnMut(f64) -> C64>(mut f: F, points: &[f64], opts: &GkOptions) -> (C64, f64, bool) {
    let r = gk_adaptive(|x, out| out[0] = f(x), points, 1, opts);
    (r.value[0], r.error, r.converged)
}

/// Real scalar convenience wrapper.
pub fn gk_real<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], opts: &GkOptions) -> (f64, f64, bool) {
    let (v, e, c) = gk_scalar(|x| C64::new(f(x), 0.0), points, opts);
    (v.re, e, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let (v, e, ok) = gk_real(|x| x.powf(-0.25), &[0.0, 1.0], &GkOptions { abs_tol: 1e-8, rel_tol: 0.0, ..Default::default() });
        assert!(ok, "err {e}");
        assert!((v - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn oscillatory_with_width_cap() {
        let n = 40.0;
        let opts = GkOptions { max_width: std::f64::consts::PI / (4.0 * n), ..Default::default() };
        let (v, _, ok) = gk_scalar(|x| C64::from_polar(1.0, n * x) * x, &[0.0, 1.0], &opts);
        let want = {
            let i = C64::new(0.0, 1.0);
            let e = C64::from_polar(1.0, n);
            e / (i * n) + (e - 1.0) / (n * n)
        };
        assert!(ok && (v - want).norm() < 1e-12);
    }
}
