//! Small dense complex linear algebra shared by the fiber computations.
//!
//! Fibers are at most 8x8, so everything here is dense. The `fiber_*`
//! functions work on row-major flat slices and avoid allocation for
//! `L <= 2`, which is what the quadrature hot loops hit.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{LapError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// The three Pauli matrices.
pub fn pauli() -> [CMat; 3] {
    let s1 = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let s2 = CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
    let s3 = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    [s1, s2, s3]
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// max |A - A^dagger| over entries.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

/// Spectral norm by eigen-decomposition of A^dagger A (fibers are tiny).
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = m.adjoint() * m;
    let e = SymmetricEigen::new(g);
    e.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b)).max(0.0).sqrt()
}

/// Hermitian eigen-decomposition with ascending eigenvalues and a
/// deterministic phase: the largest-magnitude component of each eigenvector
/// is made real positive (first index wins ties within 1e-12).
pub fn eigh_sorted(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    if n == 0 || m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LapError::EigSolverFailure("non-finite or empty fiber".into()));
    }
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(herm, 1e-15, 10_000)
        .ok_or_else(|| LapError::EigSolverFailure("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        fix_phase(&mut col);
        vecs.set_column(c, &col);
    }
    Ok((vals, vecs))
}

pub fn fix_phase(v: &mut CVec) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, z) in v.iter().enumerate() {
        let a = z.norm();
        if a > best_abs + 1e-12 {
            best_abs = a;
            best = i;
        }
    }
    if best_abs > 0.0 {
        let ph = v[best] / best_abs;
        let c = ph.conj();
        for z in v.iter_mut() {
            *z *= c;
        }
        v[best] = C64::new(v[best].re, 0.0);
    }
}

/// Symmetric (Loewdin) orthonormalization M (M^dagger M)^{-1/2}.
///
/// Returns `None` when M is numerically rank deficient.
pub fn loewdin(m: &CMat) -> Option<CMat> {
    let gram = m.adjoint() * m;
    let eig = SymmetricEigen::new(gram);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-14) {
        return None;
    }
    let r = eig.eigenvalues.len();
    let mut inv_sqrt = CMat::zeros(r, r);
    for i in 0..r {
        inv_sqrt[(i, i)] = C64::new(1.0 / eig.eigenvalues[i].sqrt(), 0.0);
    }
    let u = &eig.eigenvectors;
    Some(m * (u * inv_sqrt * u.adjoint()))
}

/// Eigenvalues (ascending) of a Hermitian matrix stored row-major.
pub fn fiber_eigenvalues(a: &[C64], l: usize, out: &mut Vec<f64>) {
    out.clear();
    match l {
        1 => out.push(a[0].re),
        2 => {
            let mean = 0.5 * (a[0].re + a[3].re);
            let half = 0.5 * (a[0].re - a[3].re);
            let r = (half * half + a[1].norm_sqr()).sqrt();
            out.push(mean - r);
            out.push(mean + r);
        }
        _ => {
            let m = CMat::from_row_slice(l, l, a);
            let herm = (&m + m.adjoint()).scale(0.5);
            let e = SymmetricEigen::new(herm);
            out.extend(e.eigenvalues.iter().cloned());
            out.sort_by(f64::total_cmp);
        }
    }
}

/// out = (A - z)^{-1}, row-major. Returns false when singular.
pub fn fiber_resolvent(a: &[C64], l: usize, z: C64, out: &mut [C64]) -> bool {
    match l {
        1 => {
            let d = a[0] - z;
            if d.norm_sqr() == 0.0 {
                return false;
            }
            out[0] = d.inv();
            true
        }
        2 => {
            let p = a[0] - z;
            let q = a[1];
            let r = a[2];
            let s = a[3] - z;
            let det = p * s - q * r;
            if det.norm_sqr() == 0.0 {
                return false;
            }
            let inv = det.inv();
            out[0] = s * inv;
            out[1] = -q * inv;
            out[2] = -r * inv;
            out[3] = p * inv;
            true
        }
        _ => {
            let mut m = CMat::from_row_slice(l, l, a);
            for i in 0..l {
                m[(i, i)] -= z;
            }
            match m.try_inverse() {
                Some(inv) => {
                    for i in 0..l {
                        for j in 0..l {
                            out[i * l + j] = inv[(i, j)];
                        }
                    }
                    true
                }
                None => false,
            }
        }
    }
}

pub fn to_row_major(m: &CMat) -> Vec<C64> {
    let (r, c) = m.shape();
    let mut v = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn from_row_major(v: &[C64], l: usize) -> CMat {
    CMat::from_row_slice(l, l, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let [s1, s2, s3] = pauli();
        let id = CMat::identity(2, 2);
        assert!(max_abs(&(&s1 * &s1 - &id)) < 1e-15);
        assert!(max_abs(&(&s1 * &s2 - (&s3 * I))) < 1e-15);
    }

    #[test]
    fn two_by_two_fast_paths_match_general() {
        let a = [C64::new(0.3, 0.0), C64::new(0.1, -0.7), C64::new(0.1, 0.7), C64::new(-1.2, 0.0)];
        let mut ev = Vec::new();
        fiber_eigenvalues(&a, 2, &mut ev);
        let (vals, _) = eigh_sorted(&from_row_major(&a, 2)).unwrap();
        assert!((ev[0] - vals[0]).abs() < 1e-13 && (ev[1] - vals[1]).abs() < 1e-13);

        let z = C64::new(0.2, 0.05);
        let mut out = [ZERO; 4];
        assert!(fiber_resolvent(&a, 2, z, &mut out));
        let m = from_row_major(&a, 2) - CMat::identity(2, 2) * z;
        let prod = m * from_row_major(&out, 2);
        assert!(max_abs(&(prod - CMat::identity(2, 2))) < 1e-13);
    }

    #[test]
    fn loewdin_is_orthonormal() {
        let m = CMat::from_row_slice(3, 2, &[ONE, I, C64::new(0.5, 0.0), ONE, ZERO, C64::new(0.2, 0.3)]);
        let q = loewdin(&m).unwrap();
        let g = q.adjoint() * &q;
        assert!(max_abs(&(g - CMat::identity(2, 2))) < 1e-13);
    }
}
