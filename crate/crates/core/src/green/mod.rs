//! Lattice Green functions by Brillouin-zone quadrature, smooth partitions
//! of unity, level sets and boundary values on the real axis.

pub mod extrapolate;
pub mod levelset;
pub mod nested;
pub mod residue;
pub mod window;

use serde::Serialize;

use crate::error::{LapError, Result};
use crate::linalg::{CMat, C64};
use crate::model::HoppingModel;
use crate::quad::{gk_scalar, GkOptions};

pub use extrapolate::{extrapolate_ray, extrapolate_to_axis, extrapolate_values, neville_at_zero, AxisLimit, EpsSchedule};
pub use levelset::{coarea_reconstruct, level_set, CoareaOptions, CoareaResult, LevelSet, TrigPoly};
pub use nested::{AxisPlan, GreenOptions, Nested};
pub use window::{make_partition, smooth_step, BumpFunction, Partition, Window};

/// One value of ⟨n|R^z_ρ|m⟩.
#[derive(Clone, Debug, Serialize)]
pub struct GreenSample {
    pub n: Vec<i64>,
    pub m: Vec<i64>,
    pub z: C64,
    pub window: Window,
    pub value: Vec<C64>,
    pub fiber_size: usize,
    pub quad_error: f64,
    pub evals: usize,
    pub converged: bool,
}

impl GreenSample {
    pub fn matrix(&self) -> CMat {
        CMat::from_row_slice(self.fiber_size, self.fiber_size, &self.value)
    }

    /// Entry (0, 0), the Green function of a scalar model.
    pub fn scalar(&self) -> C64 {
        self.value[0]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::spectral_norm(&self.matrix())
    }
}

fn check_z(z: C64) -> Result<()> {
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(LapError::PreconditionViolated(format!("quadrature needs Im z > 0, got {z}")));
    }
    Ok(())
}

/// Integer unimodular V and g = gcd(v) with V v = g e_1.
pub fn unimodular_to_axis(v: &[i64]) -> Result<(Vec<Vec<i64>>, i64)> {
    let d = v.len();
    if v.iter().all(|&x| x == 0) {
        return Err(LapError::ParameterOutOfRange("direction must be nonzero".into()));
    }
    let mut u = v.to_vec();
    let mut mat: Vec<Vec<i64>> = (0..d).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect();
    loop {
        let nz: Vec<usize> = (0..d).filter(|&i| u[i] != 0).collect();
        if nz.len() == 1 {
            break;
        }
        let p = *nz.iter().min_by_key(|&&i| u[i].abs()).unwrap();
        for &j in &nz {
            if j != p {
                let q = u[j] / u[p];
                u[j] -= q * u[p];
                let row_p = mat[p].clone();
                for (x, y) in mat[j].iter_mut().zip(&row_p) {
                    *x -= q * y;
                }
            }
        }
    }
    let p = (0..d).find(|&i| u[i] != 0).unwrap();
    u.swap(0, p);
    mat.swap(0, p);
    if u[0] < 0 {
        u[0] = -u[0];
        mat[0].iter_mut().for_each(|x| *x = -*x);
    }
    Ok((mat, u[0]))
}

fn transpose_f64(v: &[Vec<i64>]) -> Vec<f64> {
    let d = v.len();
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = v[j][i] as f64;
        }
    }
    a
}

fn identity_f64(d: usize) -> Vec<f64> {
    (0..d * d).map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 }).collect()
}

/// Green function at offsets j·v for all j in `js` (shared inner integrals).
pub fn green_ray(
    model: &HoppingModel,
    v: &[i64],
    js: &[i64],
    z: C64,
    window: &Window,
    opts: &GreenOptions,
) -> Result<Vec<GreenSample>> {
    check_z(z)?;
    let d = model.dim();
    if v.len() != d {
        return Err(LapError::DimensionMismatch(format!("offset has {} components, model dimension is {d}", v.len())));
    }
    let (mat, g) = unimodular_to_axis(v)?;
    let rotated = model.transformed(&mat);
    let a = transpose_f64(&mat);
    let mut axes: Vec<AxisPlan> = (0..d)
        .map(|i| AxisPlan { powers: vec![0], fold: window.is_torus() && i + 1 < d && rotated.reflection_symmetric(i) })
        .collect();
    axes[0].powers = js.iter().map(|j| j * g).collect();
    let l = model.fiber_size();
    let nested = Nested::new(&rotated, z, axes, window, a, *opts);
    if let Some(ext) = nested.support_extent() {
        if ext.iter().any(|&e| e > std::f64::consts::PI) {
            return Err(LapError::PreconditionViolated(format!(
                "window support spans more than one period after the basis change (half-extents {ext:?})"
            )));
        }
    }
    let r = nested.run();
    let l2 = l * l;
    let v: Vec<i64> = v.iter().map(|x| x / g).collect();
    Ok(js
        .iter()
        .enumerate()
        .map(|(i, &j)| GreenSample {
            n: v.iter().map(|x| x * j * g).collect(),
            m: vec![0; v.len()],
            z,
            window: window.clone(),
            value: r.values[i * l2..(i + 1) * l2].to_vec(),
            fiber_size: l,
            quad_error: r.error,
            evals: r.evals,
            converged: r.converged,
        })
        .collect())
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// ⟨n|R^z_ρ|m⟩ with explicit options; never fails on the node cap, the
/// sample carries `converged = false` instead.
pub fn green_quadrature_with(
    model: &HoppingModel,
    n: &[i64],
    m: &[i64],
    z: C64,
    window: &Window,
    opts: &GreenOptions,
) -> Result<GreenSample> {
    check_z(z)?;
    let d = model.dim();
    if n.len() != d || m.len() != d {
        return Err(LapError::DimensionMismatch(format!("sites must have {d} components")));
    }
    let diff: Vec<i64> = n.iter().zip(m).map(|(a, b)| a - b).collect();
    let mut s = if diff.iter().all(|&x| x == 0) {
        let axes = (0..d)
            .map(|i| AxisPlan { powers: vec![0], fold: window.is_torus() && i + 1 < d && model.reflection_symmetric(i) })
            .collect();
        let nested = Nested::new(model, z, axes, window, identity_f64(d), *opts);
        let r = nested.run();
        GreenSample {
            n: diff.clone(),
            m: vec![0; d],
            z,
            window: window.clone(),
            value: r.values,
            fiber_size: model.fiber_size(),
            quad_error: r.error,
            evals: r.evals,
            converged: r.converged,
        }
    } else {
        let g = diff.iter().fold(0i64, |acc, &x| gcd(acc, x.abs()));
        let dir: Vec<i64> = diff.iter().map(|x| x / g).collect();
        green_ray(model, &dir, &[g], z, window, opts)?.remove(0)
    };
    s.n = n.to_vec();
    s.m = m.to_vec();
    Ok(s)
}

/// ⟨n|R^z_ρ|m⟩ = (2π)^{-d} ∫ e^{i<k,n-m>} ρ(k) (E(k) - z)^{-1} dk.
pub fn green_quadrature(model: &HoppingModel, n: &[i64], m: &[i64], z: C64, window: &Window) -> Result<GreenSample> {
    let opts = GreenOptions::default();
    let s = green_quadrature_with(model, n, m, z, window, &opts)?;
    if !s.converged {
        return Err(LapError::BudgetExceeded { cap: opts.max_evals, error: s.quad_error });
    }
    Ok(s)
}

/// Green function on the offset box: entry index n_i ∈ 0..=N along
/// reflection-symmetric axes and -N..=N otherwise.
#[derive(Clone, Debug, Serialize)]
pub struct GreenTable {
    pub dim: usize,
    pub fiber_size: usize,
    pub nmax: usize,
    pub symmetric: Vec<bool>,
    pub z: C64,
    pub values: Vec<C64>,
    pub quad_error: f64,
    pub converged: bool,
}

impl GreenTable {
    fn axis_len(&self, a: usize) -> usize {
        if self.symmetric[a] {
            self.nmax + 1
        } else {
            2 * self.nmax + 1
        }
    }

    /// Flat index of offset n, or None outside the box.
    pub fn index(&self, n: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dim {
            let (pos, len) = if self.symmetric[a] {
                (n[a].unsigned_abs() as usize, self.nmax + 1)
            } else {
                ((n[a] + self.nmax as i64) as usize, 2 * self.nmax + 1)
            };
            if n[a].unsigned_abs() as usize > self.nmax {
                return None;
            }
            idx = idx * len + pos;
        }
        Some(idx)
    }

    pub fn get(&self, n: &[i64]) -> Option<&[C64]> {
        let l2 = self.fiber_size * self.fiber_size;
        self.index(n).map(|i| &self.values[i * l2..(i + 1) * l2])
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|a| self.axis_len(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn green_table(model: &HoppingModel, z: C64, nmax: usize, window: &Window, opts: &GreenOptions) -> Result<GreenTable> {
    check_z(z)?;
    let d = model.dim();
    let symmetric: Vec<bool> = (0..d).map(|a| window.is_torus() && model.reflection_symmetric(a)).collect();
    let axes = (0..d)
        .map(|a| {
            let powers: Vec<i64> =
                if symmetric[a] { (0..=nmax as i64).collect() } else { (-(nmax as i64)..=nmax as i64).collect() };
            AxisPlan { powers, fold: symmetric[a] && a + 1 < d }
        })
        .collect();
    let nested = Nested::new(model, z, axes, window, identity_f64(d), *opts);
    let r = nested.run();
    Ok(GreenTable {
        dim: d,
        fiber_size: model.fiber_size(),
        nmax,
        symmetric,
        z,
        values: r.values,
        quad_error: r.error,
        converged: r.converged,
    })
}

/// |1/(E - z) - i|n| ∫_0^∞ e^{i(z-E)|n|η} dη|, with the η-integral both in
/// closed form and by truncated adaptive quadrature; the larger defect is
/// returned.
pub fn eta_identity_check(e_val: f64, z: C64, n_norm: f64) -> Result<f64> {
    check_z(z)?;
    if !(n_norm >= 1.0) {
        return Err(LapError::ParameterOutOfRange(format!("|n| = {n_norm} must be >= 1")));
    }
    let i = C64::new(0.0, 1.0);
    let lhs = (C64::new(e_val, 0.0) - z).inv();
    let a = i * (z - e_val) * n_norm;
    let closed = i * n_norm * (-a.inv());
    let eta_max = 40.0 / (n_norm * z.im);
    let rate = n_norm * (z.re - e_val).abs();
    let opts = GkOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-14,
        max_width: if rate > 0.0 { std::f64::consts::PI / (2.0 * rate) } else { f64::INFINITY },
        max_evals: 2_000_000,
    };
    let (num, _, _) = gk_scalar(|eta| (a * eta).exp(), &[0.0, eta_max], &opts);
    let adaptive = i * n_norm * num;
    Ok((closed - lhs).norm().max((adaptive - lhs).norm()))
}

/// Both sides of |e^{izt} - e^{iz't}| <= (e^{-Im z t} + e^{-Im z' t})^{1-α} |z - z'|^α |t|^α.
pub fn exp_holder_sides(z: C64, zp: C64, t: f64, alpha: f64) -> (f64, f64) {
    let i = C64::new(0.0, 1.0);
    let lhs = ((i * z * t).exp() - (i * zp * t).exp()).norm();
    let rhs = ((-z.im * t).exp() + (-zp.im * t).exp()).powf(1.0 - alpha) * (z - zp).norm().powf(alpha) * t.abs().powf(alpha);
    (lhs, rhs)
}

/// Trivial resolvent bound vol(window)/dist + error.
pub fn resolvent_bound(sample: &GreenSample, d: usize, dist: f64) -> f64 {
    sample.window.support_volume(d) / std::f64::consts::TAU.powi(d as i32) / dist + sample.quad_error
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::reference;

    #[test]
    fn constant_symbol_identity() {
        let m = reference::constant(3, 0.0);
        let s = green_quadrature(&m, &[0, 0, 0], &[0, 0, 0], C64::new(0.0, 1.0), &Window::Torus).unwrap();
        assert!((s.scalar() - C64::new(0.0, 1.0)).norm() < 1e-12);
        let s = green_quadrature(&m, &[1, 0, 2], &[0, 0, 0], C64::new(0.0, 1.0), &Window::Torus).unwrap();
        assert!(s.scalar().norm() < 1e-12);
    }

    #[test]
    fn unimodular_completion() {
        for v in [vec![1, 1, 1], vec![2, -3, 5], vec![0, 0, -4], vec![3, 0]] {
            let (m, g) = unimodular_to_axis(&v).unwrap();
            let d = v.len();
            for i in 0..d {
                let s: i64 = (0..d).map(|j| m[i][j] * v[j]).sum();
                assert_eq!(s, if i == 0 { g } else { 0 });
            }
            let det = crate::linalg::C64::new(
                nalgebra::DMatrix::from_fn(d, d, |i, j| m[i][j] as f64).determinant(),
                0.0,
            );
            assert!((det.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_chain_closed_form() {
        // G(n) = w^|n| / (w - 1/w) with w the root inside the disk of w + 1/w = z.
        let m = reference::laplacian(1);
        let z = C64::new(0.7, 0.2);
        let s = green_ray(&m, &[1], &[0, 1, 3, -2], z, &Window::Torus, &GreenOptions::default()).unwrap();
        let disc = (z * z - 4.0).sqrt();
        let mut w = (z - disc) / 2.0;
        if w.norm() > 1.0 {
            w = (z + disc) / 2.0;
        }
        for smp in &s {
            let n = smp.n[0].unsigned_abs() as i32;
            let want = w.powi(n) / (w - w.inv());
            assert!((smp.scalar() - want).norm() < 1e-12, "{:?} {} {}", smp.n, smp.scalar(), want);
        }
    }

    #[test]
    fn two_dimensional_matches_brute_force() {
        let m = reference::laplacian(2);
        let z = C64::new(1.0, 0.5);
        let s = green_quadrature(&m, &[2, 1], &[0, 0], z, &Window::Torus).unwrap();
        let (x, w) = crate::quad::gauss_legendre_on(200, -std::f64::consts::PI, std::f64::consts::PI);
        let mut want = ZERO;
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                let e = 2.0 * a.cos() + 2.0 * b.cos();
                want += C64::from_polar(wa * wb, 2.0 * a + b) / (e - z);
            }
        }
        want /= std::f64::consts::TAU.powi(2);
        assert!((s.scalar() - want).norm() < 1e-9, "{} vs {}", s.scalar(), want);
    }

    #[test]
    fn eta_identity() {
        assert!(eta_identity_check(0.0, C64::new(0.0, 1.0), 1.0).unwrap() < 1e-12);
        assert!(eta_identity_check(2.0, C64::new(2.0, 0.1), 5.0).unwrap() < 1e-10);
        assert_eq!(eta_identity_check(0.0, C64::new(1.0, 0.0), 1.0).unwrap_err().name(), "PreconditionViolated");
    }
}
