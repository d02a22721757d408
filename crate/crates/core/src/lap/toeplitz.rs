//! Weighted block-Toeplitz operators on a lattice box, applied by FFT.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::linalg::{C64, ZERO};

/// In-place d-dimensional FFT on a cube with side `p` (row-major).
#[derive(Clone)]
pub struct CubeFft {
    pub dim: usize,
    pub side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CubeFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CubeFft({}^{})", self.side, self.dim)
    }
}

impl CubeFft {
    pub fn new(dim: usize, side: usize) -> Self {
        let mut planner = FftPlanner::new();
        CubeFft { dim, side, forward: planner.plan_fft_forward(side), inverse: planner.plan_fft_inverse(side) }
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized transform; the inverse does not divide by side^dim.
    pub fn run(&self, buf: &mut [C64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let p = self.side;
        let mut line = vec![ZERO; p];
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = p.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                for chunk in buf.chunks_mut(p) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            let block = stride * p;
            for outer in (0..buf.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = buf[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        buf[base + j * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Sites of the box |n|_∞ <= radius in row-major order.
pub fn box_sites(dim: usize, radius: usize) -> Vec<Vec<i64>> {
    let side = 2 * radius + 1;
    let total = side.pow(dim as u32);
    (0..total)
        .map(|mut i| {
            let mut n = vec![0i64; dim];
            for a in (0..dim).rev() {
                n[a] = (i % side) as i64 - radius as i64;
                i /= side;
            }
            n
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub rel_change: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A = diag(left) K diag(right) on the box |n|_∞ <= radius, with
/// (K x)(n) = Σ_m K(n - m) x(m) and K(δ) a rows×cols block.
#[derive(Clone, Debug)]
pub struct ToeplitzOp {
    pub dim: usize,
    pub radius: usize,
    pub rows: usize,
    pub cols: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    fft: CubeFft,
    /// FFT of each block component (r, c), laid out [r * cols + c][site].
    khat: Vec<Vec<C64>>,
}

impl ToeplitzOp {
    /// `kernel(δ)` returns the row-major block for offsets |δ|_∞ <= 2·radius.
    pub fn new<K: FnMut(&[i64]) -> Vec<C64>>(dim: usize, radius: usize, rows: usize, cols: usize, left: Vec<f64>, right: Vec<f64>, mut kernel: K) -> Self {
        let p = 4 * radius + 1;
        let fft = CubeFft::new(dim, p);
        let mut khat = vec![vec![ZERO; fft.len()]; rows * cols];
        for delta in box_sites(dim, 2 * radius) {
            let idx = wrap_index(&delta, p);
            let block = kernel(&delta);
            for (c, v) in block.iter().enumerate() {
                khat[c][idx] = *v;
            }
        }
        for comp in khat.iter_mut() {
            fft.run(comp, false);
        }
        ToeplitzOp { dim, radius, rows, cols, left, right, fft, khat }
    }

    pub fn sites(&self) -> usize {
        (2 * self.radius + 1).pow(self.dim as u32)
    }

    fn embed_index(&self, site: usize) -> usize {
        // Box coordinates n + R embed unchanged; the circulant only sees differences.
        let side = 2 * self.radius + 1;
        let p = self.fft.side;
        let mut rem = site;
        let mut idx = 0;
        let mut mult = 1;
        for _ in 0..self.dim {
            idx += (rem % side) * mult;
            rem /= side;
            mult *= p;
        }
        idx
    }

    fn convolve(&self, x: &[C64], adjoint: bool) -> Vec<C64> {
        let (inn, out) = if adjoint { (self.rows, self.cols) } else { (self.cols, self.rows) };
        let s = self.sites();
        let n = self.fft.len();
        let embed: Vec<usize> = (0..s).map(|i| self.embed_index(i)).collect();
        let mut xhat: Vec<Vec<C64>> = Vec::with_capacity(inn);
        for b in 0..inn {
            let mut buf = vec![ZERO; n];
            for i in 0..s {
                buf[embed[i]] = x[i * inn + b];
            }
            self.fft.run(&mut buf, false);
            xhat.push(buf);
        }
        let scale = 1.0 / n as f64;
        let mut y = vec![ZERO; s * out];
        for a in 0..out {
            let mut acc = vec![ZERO; n];
            for b in 0..inn {
                if adjoint {
                    // K^†(δ) = K(-δ)^†: conjugate transform of the conjugated block.
                    let k = &self.khat[b * self.cols + a];
                    for j in 0..n {
                        acc[j] += k[j].conj() * xhat[b][j];
                    }
                } else {
                    let k = &self.khat[a * self.cols + b];
                    for j in 0..n {
                        acc[j] += k[j] * xhat[b][j];
                    }
                }
            }
            self.fft.run(&mut acc, true);
            for i in 0..s {
                y[i * out + a] = acc[embed[i]] * scale;
            }
        }
        y
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let xr: Vec<C64> = x.iter().enumerate().map(|(i, v)| v * self.right[i / self.cols]).collect();
        let mut y = self.convolve(&xr, false);
        for (i, v) in y.iter_mut().enumerate() {
            *v *= self.left[i / self.rows];
        }
        y
    }

    pub fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let yl: Vec<C64> = y.iter().enumerate().map(|(i, v)| v * self.left[i / self.rows]).collect();
        let mut x = self.convolve(&yl, true);
        for (i, v) in x.iter_mut().enumerate() {
            *v *= self.right[i / self.cols];
        }
        x
    }

    /// Σ c_j op_j for operators sharing geometry and weights.
    pub fn combine(ops: &[&ToeplitzOp], coeffs: &[C64]) -> ToeplitzOp {
        let mut out = ops[0].clone();
        for comp in 0..out.khat.len() {
            for j in 0..out.khat[comp].len() {
                out.khat[comp][j] = ops.iter().zip(coeffs).map(|(o, c)| o.khat[comp][j] * c).sum();
            }
        }
        out
    }

    /// The operator with kernel K(-δ)^†, i.e. the adjoint.
    pub fn adjoint(&self) -> ToeplitzOp {
        let n = self.fft.len();
        let mut khat = vec![vec![ZERO; n]; self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                khat[c * self.rows + r] = self.khat[r * self.cols + c].iter().map(|v| v.conj()).collect();
            }
        }
        ToeplitzOp { rows: self.cols, cols: self.rows, left: self.right.clone(), right: self.left.clone(), khat, ..self.clone() }
    }

    /// Largest singular value by power iteration on A^†A.
    pub fn norm(&self, tol: f64, max_iter: usize, seed: u64) -> NormEstimate {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<C64> = (0..self.sites() * self.cols).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let mut sigma = 0.0;
        let mut change = f64::INFINITY;
        for it in 1..=max_iter {
            let y = self.apply(&x);
            let s = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if s == 0.0 {
                return NormEstimate { value: 0.0, rel_change: 0.0, iterations: it, converged: true };
            }
            change = (s - sigma).abs() / s;
            sigma = s;
            if change <= tol && it > 2 {
                return NormEstimate { value: sigma, rel_change: change, iterations: it, converged: true };
            }
            x = self.apply_adjoint(&y);
            let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nx);
        }
        NormEstimate { value: sigma, rel_change: change, iterations: max_iter, converged: false }
    }
}

fn wrap_index(delta: &[i64], p: usize) -> usize {
    delta.iter().fold(0usize, |acc, &x| acc * p + x.rem_euclid(p as i64) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spectral_norm, CMat};

    fn test_kernel(d: &[i64]) -> Vec<C64> {
        let s: i64 = d.iter().map(|x| x.abs()).sum();
        let a = C64::new(1.0 / (1.0 + s as f64), 0.3 * d[0] as f64 / (2.0 + s as f64));
        vec![a, a * 0.5, C64::new(0.1, -(d[d.len() - 1] as f64) * 0.05), a.conj()]
    }

    #[test]
    fn fft_matvec_matches_dense() {
        let (dim, r) = (2, 2);
        let sites = box_sites(dim, r);
        let w: Vec<f64> = sites.iter().map(|n| crate::torus::bracket(n).powf(-0.7)).collect();
        let op = ToeplitzOp::new(dim, r, 2, 2, w.clone(), w.clone(), test_kernel);
        let s = sites.len();
        let mut dense = CMat::zeros(2 * s, 2 * s);
        for (i, n) in sites.iter().enumerate() {
            for (j, m) in sites.iter().enumerate() {
                let d: Vec<i64> = n.iter().zip(m).map(|(a, b)| a - b).collect();
                let k = test_kernel(&d);
                for a in 0..2 {
                    for b in 0..2 {
                        dense[(2 * i + a, 2 * j + b)] = k[2 * a + b] * w[i] * w[j];
                    }
                }
            }
        }
        let x: Vec<C64> = (0..2 * s).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let y = op.apply(&x);
        let yd = &dense * crate::linalg::CVec::from_vec(x.clone());
        assert!(y.iter().zip(yd.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
        let ya = op.apply_adjoint(&x);
        let yad = dense.adjoint() * crate::linalg::CVec::from_vec(x);
        assert!(ya.iter().zip(yad.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
        let nrm = op.norm(1e-12, 5000, 1);
        assert!((nrm.value - spectral_norm(&dense)).abs() < 1e-8 * nrm.value, "{nrm:?}");
        assert!((op.adjoint().norm(1e-12, 5000, 2).value - nrm.value).abs() < 1e-8 * nrm.value);
    }
}
