//! Exact line integrals (1/2π)∫ e^{ikn} (E(k) - z)^{-1} dk by residues.
//!
//! With w = e^{ik} the integrand is w^{n-1+LD} adj(E(w) - z) / Q(w), where
//! Q(w) = w^{LD} det(E(w) - z) has degree 2LD. Exactly LD of its roots lie
//! inside the unit disk when Im z != 0.

use nalgebra::DMatrix;

use crate::linalg::{C64, ZERO};

/// Laurent matrix polynomial Σ_{p=-D}^{D} C_p w^p, coefficients row-major.
#[derive(Clone, Debug)]
pub struct LaurentLine {
    pub l: usize,
    pub deg: usize,
    /// `coef[p + D]` is C_p.
    pub coef: Vec<Vec<C64>>,
}

impl LaurentLine {
    pub fn new(l: usize, powers: &[i64], coeffs: &[&[C64]]) -> Self {
        let deg = powers.iter().map(|p| p.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coef = vec![vec![ZERO; l * l]; 2 * deg + 1];
        for (&p, c) in powers.iter().zip(coeffs) {
            let slot = &mut coef[(p + deg as i64) as usize];
            for (o, &v) in slot.iter_mut().zip(c.iter()) {
                *o += v;
            }
        }
        LaurentLine { l, deg, coef }
    }

    /// The line k -> E(-k).
    pub fn reversed(&self) -> Self {
        let mut coef = self.coef.clone();
        coef.reverse();
        LaurentLine { l: self.l, deg: self.deg, coef }
    }

    /// E(w) - z at complex w, row-major.
    pub fn shifted_at(&self, w: C64, z: C64, out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = ZERO);
        let d = self.deg as i32;
        for (i, c) in self.coef.iter().enumerate() {
            let wp = w.powi(i as i32 - d);
            for (o, &v) in out.iter_mut().zip(c) {
                *o += wp * v;
            }
        }
        for i in 0..self.l {
            out[i * self.l + i] -= z;
        }
    }
}

fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn horner(q: &[C64], w: C64) -> (C64, C64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &c in q.iter().rev() {
        dp = dp * w + p;
        p = p * w + c;
    }
    (p, dp)
}

fn det_lu(m: &[C64], n: usize) -> C64 {
    match n {
        0 => C64::new(1.0, 0.0),
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => DMatrix::from_row_slice(n, n, m).determinant(),
    }
}

/// Coefficients q_0..q_{2LD} of Q(w) = w^{LD} det(E(w) - z).
fn q_coefficients(line: &LaurentLine, z: C64) -> Vec<C64> {
    let l = line.l;
    let d = line.deg;
    let entry = |i: usize, j: usize| -> Vec<C64> {
        line.coef
            .iter()
            .enumerate()
            .map(|(p, c)| c[i * l + j] - if i == j && p == d { z } else { ZERO })
            .collect()
    };
    match l {
        1 => entry(0, 0),
        2 => {
            let ad = poly_mul(&entry(0, 0), &entry(1, 1));
            let bc = poly_mul(&entry(0, 1), &entry(1, 0));
            ad.iter().zip(&bc).map(|(x, y)| x - y).collect()
        }
        _ => {
            // Sample on the unit circle and invert the DFT.
            let n = 2 * l * d + 1;
            let mut buf = vec![ZERO; l * l];
            let samples: Vec<C64> = (0..n)
                .map(|j| {
                    let w = C64::from_polar(1.0, std::f64::consts::TAU * j as f64 / n as f64);
                    line.shifted_at(w, z, &mut buf);
                    w.powi((l * d) as i32) * det_lu(&buf, l)
                })
                .collect();
            (0..n)
                .map(|m| {
                    let mut s = ZERO;
                    for (j, &q) in samples.iter().enumerate() {
                        s += q * C64::from_polar(1.0, -std::f64::consts::TAU * (j * m) as f64 / n as f64);
                    }
                    s / n as f64
                })
                .collect()
        }
    }
}

/// All roots of the polynomial Σ q_j w^j (q_last != 0) by Aberth iteration.
pub fn poly_roots(q: &[C64]) -> Option<Vec<C64>> {
    let n = q.len() - 1;
    match n {
        0 => return Some(Vec::new()),
        1 => return Some(vec![-q[0] / q[1]]),
        2 => {
            let (a, b, c) = (q[2], q[1], q[0]);
            let disc = (b * b - 4.0 * a * c).sqrt();
            let s = if (b.conj() * disc).re >= 0.0 { -(b + disc) } else { -(b - disc) };
            if s.norm() == 0.0 {
                return Some(vec![ZERO, ZERO]);
            }
            return Some(vec![s / (2.0 * a), 2.0 * c / s]);
        }
        _ => {}
    }
    // Initial guesses on a circle of the Cauchy-bound radius.
    let lead = q[n].norm();
    let radius = q[..n].iter().map(|c| c.norm() / lead).fold(0.0, f64::max).max(1e-3).powf(1.0 / n as f64).max(0.5);
    let mut r: Vec<C64> = (0..n).map(|k| C64::from_polar(radius, 0.4 + std::f64::consts::TAU * k as f64 / n as f64)).collect();
    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let (p, dp) = horner(q, r[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut s = ZERO;
            for j in 0..n {
                if j != i {
                    s += (r[i] - r[j]).inv();
                }
            }
            let step = ratio / (C64::new(1.0, 0.0) - ratio * s);
            r[i] -= step;
            moved = moved.max(step.norm() / (1.0 + r[i].norm()));
        }
        if moved < 1e-15 {
            return Some(r);
        }
    }
    if r.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Some(r)
    } else {
        None
    }
}

/// adj(E(w) - z), row-major.
fn adjugate(line: &LaurentLine, w: C64, z: C64, out: &mut [C64]) {
    let l = line.l;
    let mut m = vec![ZERO; l * l];
    line.shifted_at(w, z, &mut m);
    match l {
        1 => out[0] = C64::new(1.0, 0.0),
        2 => {
            out[0] = m[3];
            out[1] = -m[1];
            out[2] = -m[2];
            out[3] = m[0];
        }
        _ => {
            let mut minor = vec![ZERO; (l - 1) * (l - 1)];
            for i in 0..l {
                for j in 0..l {
                    // Cofactor of entry (j, i).
                    let mut t = 0;
                    for r in 0..l {
                        if r == j {
                            continue;
                        }
                        for c in 0..l {
                            if c == i {
                                continue;
                            }
                            minor[t] = m[r * l + c];
                            t += 1;
                        }
                    }
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    out[i * l + j] = det_lu(&minor, l - 1) * sign;
                }
            }
        }
    }
}

/// Poles of the line resolvent inside the unit disk with their residue
/// matrices adj(w_r)/Q'(w_r).
#[derive(Clone, Debug)]
pub struct InteriorPoles {
    pub shift: i32,
    pub roots: Vec<C64>,
    pub residues: Vec<Vec<C64>>,
    /// Residues of w^{n-1} (E(w) - z)^{-1} at w = 0 for small n.
    pub origin: Vec<Vec<C64>>,
}

pub fn interior_poles(line: &LaurentLine, z: C64) -> Option<InteriorPoles> {
    let l = line.l;
    let ld = l * line.deg;
    let mut q = q_coefficients(line, z);
    let scale = q.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    while q.len() > 1 && q.last().unwrap().norm() <= 1e-14 * scale {
        q.pop();
    }
    // Singular C_{-D}: Q has a root of multiplicity s at the origin, where
    // the resolvent may have a pole of its own.
    let s = q.iter().take_while(|c| c.norm() <= 1e-14 * scale).count();
    if s == q.len() {
        return None;
    }
    let reduced = &q[s..];
    let mut roots = poly_roots(reduced)?;
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(reduced, *r);
            if dp.norm() == 0.0 {
                break;
            }
            *r -= p / dp;
        }
    }
    if roots.iter().any(|w| w.norm() <= 1e-10) {
        return None;
    }
    let inside: Vec<C64> = roots.iter().cloned().filter(|w| w.norm() < 1.0).collect();
    if inside.len() + s != ld || roots.iter().any(|w| (w.norm() - 1.0).abs() < 1e-12) {
        return None;
    }
    let mut residues = Vec::with_capacity(inside.len());
    let mut adj = vec![ZERO; l * l];
    for &w in &inside {
        let (_, dq) = horner(&q, w);
        if dq.norm() <= 1e-13 * scale {
            return None;
        }
        adjugate(line, w, z, &mut adj);
        residues.push(adj.iter().map(|a| a / dq).collect());
    }
    let mut origin = Vec::new();
    if s > 0 {
        // Laurent coefficients at 0 by the trapezoidal rule on a small circle.
        let r = 0.5 * roots.iter().map(|w| w.norm()).fold(1.0, f64::min);
        let nodes = 64;
        let mut buf = vec![ZERO; l * l];
        let mut inv = vec![ZERO; l * l];
        origin = vec![vec![ZERO; l * l]; s + 1];
        for j in 0..nodes {
            let w = C64::from_polar(r, std::f64::consts::TAU * j as f64 / nodes as f64);
            line.shifted_at(w, z, &mut buf);
            if !crate::linalg::fiber_resolvent(&buf, l, ZERO, &mut inv) {
                return None;
            }
            let mut wp = C64::new(1.0 / nodes as f64, 0.0);
            for o in origin.iter_mut() {
                for (x, v) in o.iter_mut().zip(&inv) {
                    *x += wp * v;
                }
                wp *= w;
            }
        }
    }
    Some(InteriorPoles { shift: ld as i32 - 1, roots: inside, residues, origin })
}

impl InteriorPoles {
    /// Accumulate Σ_r w_r^{n + shift} R_r for n = 0..=n_max into
    /// `out[n * L^2 ..]`.
    pub fn moments(&self, n_max: usize, l2: usize, out: &mut [C64]) {
        out[..(n_max + 1) * l2].iter_mut().for_each(|x| *x = ZERO);
        for (w, res) in self.roots.iter().zip(&self.residues) {
            let mut wp = w.powi(self.shift);
            for n in 0..=n_max {
                let o = &mut out[n * l2..(n + 1) * l2];
                for (x, &r) in o.iter_mut().zip(res) {
                    *x += wp * r;
                }
                wp *= w;
            }
        }
        for (n, res) in self.origin.iter().enumerate().take(n_max + 1) {
            for (x, &r) in out[n * l2..(n + 1) * l2].iter_mut().zip(res) {
                *x += r;
            }
        }
    }
}

/// (1/2π)∫ e^{ikn} (E(k) - z)^{-1} dk for each n in `powers`, written as
/// L x L row-major blocks. Returns false if the residue route is unsafe.
pub fn line_integrals(line: &LaurentLine, z: C64, powers: &[i64], out: &mut [C64]) -> bool {
    let l2 = line.l * line.l;
    if line.deg == 0 {
        let mut inv = vec![ZERO; l2];
        if !crate::linalg::fiber_resolvent(&line.coef[0], line.l, z, &mut inv) {
            return false;
        }
        for (i, &n) in powers.iter().enumerate() {
            let o = &mut out[i * l2..(i + 1) * l2];
            if n == 0 {
                o.copy_from_slice(&inv);
            } else {
                o.iter_mut().for_each(|x| *x = ZERO);
            }
        }
        return true;
    }
    let max_pos = powers.iter().filter(|&&n| n >= 0).max().copied();
    let max_neg = powers.iter().filter(|&&n| n < 0).map(|n| -n).max();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    if let Some(m) = max_pos {
        let p = match interior_poles(line, z) {
            Some(p) => p,
            None => return false,
        };
        pos = vec![ZERO; (m as usize + 1) * l2];
        p.moments(m as usize, l2, &mut pos);
    }
    if let Some(m) = max_neg {
        let p = match interior_poles(&line.reversed(), z) {
            Some(p) => p,
            None => return false,
        };
        neg = vec![ZERO; (m as usize + 1) * l2];
        p.moments(m as usize, l2, &mut neg);
    }
    for (i, &n) in powers.iter().enumerate() {
        let src = if n >= 0 { &pos[n as usize * l2..(n as usize + 1) * l2] } else { &neg[(-n) as usize * l2..(-n + 1) as usize * l2] };
        out[i * l2..(i + 1) * l2].copy_from_slice(src);
    }
    true
}
