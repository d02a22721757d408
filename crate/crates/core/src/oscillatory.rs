//! Oscillatory integrals I(z,t,ω) = ∫dx ∫_0^∞dη e^{iztη} e^{it(<x,ω> - ηf(x))} ρ(x)
//! near a Morse critical point of f, their η-splits, and the three-range
//! η-split of the Weyl-point integral.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LapError, Result};
use crate::green::smooth_step;
use crate::linalg::{C64, ZERO};
use crate::quad::{gauss_legendre, gauss_legendre_on, gk_scalar, GkOptions};
use crate::weyl::{weyl_chart_warm, WeylChart};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Smooth real phase on R^d.
pub trait Phase: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// f(x) = ½ <x, H x> + Σ_j c_j x_j³.
#[derive(Clone, Debug, Serialize)]
pub struct CubicPhase {
    pub h: Vec<f64>,
    pub cubic: Vec<f64>,
    d: usize,
}

impl CubicPhase {
    pub fn new(h: DMatrix<f64>, cubic: Vec<f64>) -> Self {
        let d = h.nrows();
        CubicPhase { h: h.as_slice().to_vec(), cubic, d }
    }

    /// |x|²/2.
    pub fn definite(d: usize) -> Self {
        CubicPhase::new(DMatrix::identity(d, d), vec![0.0; d])
    }

    /// (x_1² + ... + x_{d-1}² - x_d²)/2.
    pub fn indefinite(d: usize) -> Self {
        let mut h = DMatrix::identity(d, d);
        h[(d - 1, d - 1)] = -1.0;
        CubicPhase::new(h, vec![0.0; d])
    }

    pub fn with_cubic(mut self, cubic: Vec<f64>) -> Self {
        self.cubic = cubic;
        self
    }

    fn hm(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.d, self.d, &self.h)
    }
}

impl Phase for CubicPhase {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += 0.5 * x[i] * self.h[i + j * self.d] * x[j];
            }
            s += self.cubic[i] * x[i].powi(3);
        }
        s
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| self.h[i + j * self.d] * x[j]).sum::<f64>() + 3.0 * self.cubic[i] * x[i] * x[i])
            .collect()
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.hm();
        for i in 0..self.d {
            m[(i, i)] += 6.0 * self.cubic[i] * x[i];
        }
        m
    }
}

/// Phase f around its critical point x0 with the radial cutoff ρ
/// (= amplitude on |x - x0| <= r1, 0 beyond r2).
#[derive(Clone, Debug)]
pub struct PhaseProblem {
    pub phase: Arc<dyn Phase>,
    pub x0: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
    pub amplitude: f64,
    /// Gradient bound r with sup_U |∇f| < r <= 1/2.
    pub r: f64,
    pub hessian_at_x0: DMatrix<f64>,
}

impl PhaseProblem {
    pub fn new(phase: Arc<dyn Phase>, x0: &[f64], r1: f64, r2: f64) -> Result<Self> {
        let d = phase.dim();
        if x0.len() != d || !(d == 2 || d == 3) {
            return Err(LapError::DimensionMismatch(format!("phase problems need d = 2 or 3 and a matching x0, got d = {d}")));
        }
        if !(0.0 <= r1 && r1 < r2) {
            return Err(LapError::ParameterOutOfRange(format!("cutoff radii {r1}, {r2}")));
        }
        let g = phase.gradient(x0);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn > 1e-10 {
            return Err(LapError::PreconditionViolated(format!("|∇f(x0)| = {gn:e} is not zero")));
        }
        if phase.value(x0).abs() > 1e-10 {
            return Err(LapError::PreconditionViolated("f(x0) must vanish".into()));
        }
        let h = phase.hessian(x0);
        if h.determinant().abs() <= 1e-8 {
            return Err(LapError::PreconditionViolated("Hessian at x0 is degenerate".into()));
        }
        // sup |∇f| over the support, sampled on spheres.
        let mut sup: f64 = 0.0;
        let dirs = unit_directions(d, 24);
        for s in 1..=24 {
            let rad = r2 * s as f64 / 24.0;
            for u in &dirs {
                let x: Vec<f64> = x0.iter().zip(u).map(|(a, b)| a + rad * b).collect();
                sup = sup.max(phase.gradient(&x).iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        let r = 1.01 * sup;
        if r > 0.5 {
            return Err(LapError::PreconditionViolated(format!("sup |∇f| = {sup:.4} on the support; need < 1/2")));
        }
        Ok(PhaseProblem { phase, x0: x0.to_vec(), r1, r2, amplitude: 1.0, r, hessian_at_x0: h })
    }

    pub fn dim(&self) -> usize {
        self.phase.dim()
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn rho_radial(&self, rad: f64) -> f64 {
        self.amplitude * smooth_step((rad - self.r1) / (self.r2 - self.r1))
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        let rad = x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        self.rho_radial(rad)
    }

    /// <ω, (∇²f(x0))^{-1} ω>.
    pub fn inverse_hessian_form(&self, omega: &[f64]) -> f64 {
        let w = nalgebra::DVector::from_column_slice(omega);
        let inv = self.hessian_at_x0.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(w.len(), w.len()));
        w.dot(&(inv * &w))
    }

    pub fn signature(&self) -> i64 {
        let e = SymmetricEigen::new(self.hessian_at_x0.clone());
        e.eigenvalues.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).sum()
    }
}

fn unit_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    if d == 2 {
        return (0..n).map(|j| {
            let a = 2.0 * PI * j as f64 / n as f64;
            vec![a.cos(), a.sin()]
        }).collect();
    }
    // Fibonacci sphere.
    let g = PI * (3.0 - 5f64.sqrt());
    (0..n * n / 4)
        .map(|j| {
            let m = (n * n / 4) as f64;
            let z = 1.0 - 2.0 * (j as f64 + 0.5) / m;
            let s = (1.0 - z * z).sqrt();
            let a = g * j as f64;
            vec![s * a.cos(), s * a.sin(), z]
        })
        .collect()
}

/// ∫_0^1 e^{iηw} dη = (e^{iw} - 1)/(iw).
pub fn eta_unit(w: C64) -> C64 {
    if w.norm() < 1e-4 {
        C64::new(1.0, 0.0) + I * w / 2.0 - w * w / 6.0
    } else {
        ((I * w).exp() - 1.0) / (I * w)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OscOptions {
    /// Extra angular nodes beyond the oscillation count.
    pub angular_base: usize,
    /// Gauss-Legendre nodes per axis for the I₁ grid (d = 3; doubled in d = 2).
    pub grid_nodes: usize,
    pub line_tol: f64,
    /// Use the μ-route for I₂ when Im z > 0 and it needs at most this many
    /// oscillations of e^{izt/μ}.
    pub mu_route_max_oscillations: f64,
}

impl Default for OscOptions {
    fn default() -> Self {
        OscOptions { angular_base: 24, grid_nodes: 96, line_tol: 1e-11, mu_route_max_oscillations: 60.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SecondRoute {
    /// I₂ by the μ = 1/η integral.
    MuIntegral,
    /// I₂ = I - I₁.
    Complement,
}

#[derive(Clone, Debug, Serialize)]
pub struct OscSample {
    pub z: C64,
    pub t: f64,
    pub omega: Vec<f64>,
    pub i_value: C64,
    pub i1_value: C64,
    pub i2_value: C64,
    pub m_value: C64,
    pub i_error: f64,
    pub i1_error: f64,
    pub i2_error: f64,
    pub i2_route: SecondRoute,
}

/// ∫_lo^hi g(s)/(z - φ(s)) ds for Im z >= 0 (z + i0 when Im z = 0), with
/// every crossing φ = Re z subtracted analytically.
pub fn singular_line<G, F>(g: G, phi: F, z: C64, lo: f64, hi: f64, cap: f64, tol: f64) -> (C64, f64)
where
    G: Fn(f64) -> C64,
    F: Fn(f64) -> f64,
{
    let e = z.re;
    let samples = 48;
    let xs: Vec<f64> = (0..=samples).map(|j| lo + (hi - lo) * j as f64 / samples as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&s| phi(s) - e).collect();
    let mut poles: Vec<(f64, f64, C64)> = Vec::new();
    for j in 0..samples {
        let (mut a, mut b, mut fa, mut fb) = (xs[j], xs[j + 1], vals[j], vals[j + 1]);
        if fa == 0.0 || fa * fb > 0.0 {
            continue;
        }
        if fb == 0.0 {
            a = b;
        }
        // Illinois regula falsi.
        let mut side = 0i8;
        for _ in 0..200 {
            if b - a <= 1e-15 * (1.0 + a.abs()) {
                break;
            }
            let m = (a * fb - b * fa) / (fb - fa);
            let m = if m > a && m < b { m } else { 0.5 * (a + b) };
            let fm = phi(m) - e;
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if (fm > 0.0) == (fa > 0.0) {
                a = m;
                fa = fm;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = m;
                fb = fm;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        let s0 = 0.5 * (a + b);
        let hstep = 1e-6 * (hi - lo);
        let slope = (phi(s0 + hstep) - phi(s0 - hstep)) / (2.0 * hstep);
        if slope.abs() < 1e-12 || s0 <= lo || s0 >= hi {
            continue;
        }
        // z - φ(s) ≈ iε - a (s - s0); pole at s0 + iε/a (ε → +0 keeps the side).
        let shift = if z.im > 0.0 { z.im / slope } else { 1e-300 * slope.signum() };
        poles.push((s0, slope, C64::new(s0, shift)));
    }
    let mut analytic = ZERO;
    let gs: Vec<C64> = poles.iter().map(|p| g(p.0)).collect();
    for ((s0, a, c), gv) in poles.iter().zip(&gs) {
        let log_term = if z.im > 0.0 {
            (C64::new(hi, 0.0) - c).ln() - (C64::new(lo, 0.0) - c).ln()
        } else {
            C64::new(((hi - s0) / (s0 - lo)).ln(), PI * a.signum())
        };
        analytic += -gv / a * log_term;
    }
    let mut points = vec![lo];
    let mut inner: Vec<f64> = poles.iter().map(|p| p.0).collect();
    inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.extend(inner);
    points.push(hi);
    let opts = GkOptions { abs_tol: tol, rel_tol: tol, max_width: cap, max_evals: 40_000 };
    let raw = |s: f64| {
        let mut v = g(s) / (z - phi(s));
        for ((s0, a, c), gv) in poles.iter().zip(&gs) {
            let den = if z.im > 0.0 { C64::new(s, 0.0) - c } else { C64::new(s - s0, 0.0) };
            v += gv / a / den;
        }
        v
    };
    // On the real axis the remainder is smooth but cancels near each
    // crossing; bridge |s - s0| < δ linearly.
    let delta = 1e-5 * (hi - lo);
    let rem = |s: f64| {
        if z.im == 0.0 {
            if let Some((s0, _, _)) = poles.iter().find(|p| (s - p.0).abs() < delta) {
                let (l, r) = ((s0 - delta).max(lo), (s0 + delta).min(hi));
                let (vl, vr) = (raw(l), raw(r));
                return vl + (vr - vl) * ((s - l) / (r - l));
            }
        }
        raw(s)
    };
    let (rem, err, _) = gk_scalar(rem, &points, &opts);
    (analytic + rem, err)
}

/// Orthonormal frame with `axis` first.
fn frame3(axis: &[f64]) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let a = [axis[0] / n, axis[1] / n, axis[2] / n];
    let trial = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = a[0] * trial[0] + a[1] * trial[1] + a[2] * trial[2];
    let mut b = [trial[0] - dot * a[0], trial[1] - dot * a[1], trial[2] - dot * a[2]];
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    b = [b[0] / nb, b[1] / nb, b[2] / nb];
    let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    [a, b, c]
}

/// Gauss-Legendre in u = cos θ times the trapezoidal rule in the azimuth.
fn sphere_rule(n_u: usize, n_az: usize) -> Vec<(f64, f64, f64)> {
    let (u, w) = gauss_legendre(n_u);
    let mut out = Vec::with_capacity(n_u * n_az);
    for (ui, wi) in u.iter().zip(&w) {
        for j in 0..n_az {
            out.push((*ui, 2.0 * PI * j as f64 / n_az as f64, wi * 2.0 * PI / n_az as f64));
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// (i/t) ∫ dx e^{it<x,ω>} ρ(x) / (z - f(x)) in polar coordinates around x0
/// with `n_ang` angular nodes per direction.
fn resolvent_route(p: &PhaseProblem, z: C64, t: f64, omega: &[f64], n_ang: usize, o: &OscOptions) -> C64 {
    let d = p.dim();
    let f = &p.phase;
    let cap = PI / (t + 1.0);
    let x_at = |rad: f64, dir: &[f64]| -> Vec<f64> { p.x0.iter().zip(dir).map(|(a, b)| a + rad * b).collect() };
    let indefinite = p.signature().unsigned_abs() as usize != d;
    let angular = z.im == 0.0 && z.re.abs() <= 1e-12 && indefinite;
    let phase0 = C64::from_polar(1.0, t * dot(&p.x0, omega));
    let total: C64 = if !angular {
        // Rays from x0 with the radial line integral innermost.
        let dirs: Vec<(Vec<f64>, f64)> = if d == 2 {
            let n = n_ang.max(8);
            (0..n).map(|j| {
                let a = 2.0 * PI * j as f64 / n as f64;
                (vec![a.cos(), a.sin()], 2.0 * PI / n as f64)
            }).collect()
        } else {
            let fr = frame3(omega);
            sphere_rule(n_ang, n_ang).into_iter().map(|(u, az, w)| {
                let s = (1.0 - u * u).sqrt();
                let dir: Vec<f64> = (0..3).map(|i| u * fr[0][i] + s * (az.cos() * fr[1][i] + az.sin() * fr[2][i])).collect();
                (dir, w)
            }).collect()
        };
        let vals: Vec<C64> = dirs
            .par_iter()
            .map(|(dir, w)| {
                let wdot = dot(dir, omega);
                let (v, _) = singular_line(
                    |rad| C64::from_polar(rad.powi(d as i32 - 1) * p.rho_radial(rad), t * rad * wdot),
                    |rad| f.value(&x_at(rad, dir)),
                    z,
                    0.0,
                    p.r2,
                    cap,
                    o.line_tol,
                );
                v * *w
            })
            .collect();
        vals.iter().sum()
    } else {
        // Outer radius and azimuth; the polar line about the minority
        // eigenvector crosses the null cone transversally.
        let eig = SymmetricEigen::new(p.hessian_at_x0.clone());
        let neg = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        let minority_negative = 2 * neg <= d;
        let idx = (0..d)
            .filter(|&i| (eig.eigenvalues[i] < 0.0) == minority_negative)
            .max_by(|&a, &b| eig.eigenvalues[a].abs().partial_cmp(&eig.eigenvalues[b].abs()).unwrap())
            .unwrap();
        let axis: Vec<f64> = eig.eigenvectors.column(idx).iter().cloned().collect();
        let panels = ((t * p.r2 / PI).ceil() as usize).max(2);
        let mut radial = Vec::new();
        for q in 0..panels {
            let (x, w) = gauss_legendre_on(16, p.r2 * q as f64 / panels as f64, p.r2 * (q + 1) as f64 / panels as f64);
            radial.extend(x.into_iter().zip(w));
        }
        let jobs: Vec<(f64, f64, f64, f64)> = if d == 2 {
            radial.iter().map(|&(rad, w)| (rad, 0.0, w, 1.0)).collect()
        } else {
            let n_az = n_ang;
            radial.iter().flat_map(|&(rad, w)| (0..n_az).map(move |j| (rad, 2.0 * PI * j as f64 / n_az as f64, w, 2.0 * PI / n_az as f64))).collect()
        };
        let vals: Vec<C64> = jobs
            .par_iter()
            .map(|&(rad, az, wr, waz)| {
                if d == 2 {
                    let perp = [-axis[1], axis[0]];
                    let dir = |psi: f64| vec![psi.cos() * axis[0] + psi.sin() * perp[0], psi.cos() * axis[1] + psi.sin() * perp[1]];
                    let (v, _) = singular_line(
                        |psi| C64::from_polar(rad * p.rho_radial(rad), t * rad * dot(&dir(psi), omega)),
                        |psi| f.value(&x_at(rad, &dir(psi))),
                        z,
                        0.0,
                        2.0 * PI,
                        cap,
                        o.line_tol,
                    );
                    v * wr
                } else {
                    let fr = frame3(&axis);
                    let dir = |u: f64| -> Vec<f64> {
                        let s = (1.0 - u * u).max(0.0).sqrt();
                        (0..3).map(|i| u * fr[0][i] + s * (az.cos() * fr[1][i] + az.sin() * fr[2][i])).collect()
                    };
                    let (v, _) = singular_line(
                        |u| C64::from_polar(rad * rad * p.rho_radial(rad), t * rad * dot(&dir(u), omega)),
                        |u| f.value(&x_at(rad, &dir(u))),
                        z,
                        -1.0,
                        1.0,
                        cap,
                        o.line_tol,
                    );
                    v * wr * waz
                }
            })
            .collect();
        vals.iter().sum()
    };
    I / t * total * phase0
}

/// I(z,t,ω) through ∫_0^∞ e^{itη(z-f)} dη = i/(t(z-f)), with an error
/// estimate from two angular resolutions.
pub fn eval_i_total(p: &PhaseProblem, z: C64, t: f64, omega: &[f64], o: &OscOptions) -> Result<(C64, f64)> {
    check_omega(p, omega)?;
    if z.im < 0.0 || !(t >= 1.0) {
        return Err(LapError::PreconditionViolated("need Im z >= 0 and t >= 1".into()));
    }
    let base = o.angular_base + (2.0 * t * p.r2).ceil() as usize;
    let a = resolvent_route(p, z, t, omega, base, o);
    let b = resolvent_route(p, z, t, omega, base + base / 2, o);
    Ok((b, (a - b).norm()))
}

fn check_omega(p: &PhaseProblem, omega: &[f64]) -> Result<()> {
    if omega.len() != p.dim() || (dot(omega, omega).sqrt() - 1.0).abs() > 1e-12 {
        return Err(LapError::ParameterOutOfRange("ω must be a unit vector of the phase dimension".into()));
    }
    Ok(())
}

/// Tensor Gauss-Legendre sum of `g` over the support cube.
fn grid_sum<G: Fn(&[f64]) -> C64 + Sync>(p: &PhaseProblem, n: usize, g: G) -> C64 {
    let d = p.dim();
    let (x, w) = gauss_legendre(n);
    let rows: Vec<C64> = (0..n.pow(d as u32 - 1))
        .into_par_iter()
        .map(|outer| {
            let mut idx = vec![0usize; d];
            let mut r = outer;
            for a in (1..d).rev() {
                idx[a] = r % n;
                r /= n;
            }
            let mut pt = vec![0.0; d];
            let mut wo = 1.0;
            for a in 1..d {
                pt[a] = p.x0[a] + p.r2 * x[idx[a]];
                wo *= w[idx[a]] * p.r2;
            }
            let mut s = ZERO;
            for i in 0..n {
                pt[0] = p.x0[0] + p.r2 * x[i];
                s += g(&pt) * (w[i] * p.r2);
            }
            s * wo
        })
        .collect();
    rows.iter().sum()
}

/// I₁(z,t,ω) = ∫dx e^{it<x,ω>} ρ(x) ∫_0^1 e^{itη(z - f(x))} dη on a tensor grid.
pub fn eval_i1(p: &PhaseProblem, z: C64, t: f64, omega: &[f64], o: &OscOptions) -> Result<(C64, f64)> {
    check_omega(p, omega)?;
    let n = if p.dim() == 2 { 2 * o.grid_nodes } else { o.grid_nodes };
    let g = |x: &[f64]| {
        let rho = p.rho(x);
        if rho == 0.0 {
            return ZERO;
        }
        C64::from_polar(rho, t * dot(x, omega)) * eta_unit(t * (z - p.phase.value(x)))
    };
    let a = grid_sum(p, n, g);
    let b = grid_sum(p, n * 3 / 4, g);
    Ok((a, (a - b).norm()))
}

/// I₂ by the μ = 1/η change of variables:
/// ∫_0^1 dμ e^{izt/μ} μ^{-2} ∫dx e^{i(t/μ)(μ<x,ω> - f(x))} ρ(x), Im z > 0.
pub fn eval_i2_mu(p: &PhaseProblem, z: C64, t: f64, omega: &[f64], o: &OscOptions) -> Result<(C64, f64)> {
    check_omega(p, omega)?;
    if z.im <= 0.0 {
        return Err(LapError::PreconditionViolated("the μ-route needs Im z > 0".into()));
    }
    let mu_min = (z.im * t / 40.0).min(1.0);
    let n = if p.dim() == 2 { 2 * o.grid_nodes } else { o.grid_nodes };
    let j2 = |mu: f64, n: usize| grid_sum(p, n, |x: &[f64]| {
        let rho = p.rho(x);
        if rho == 0.0 {
            return ZERO;
        }
        C64::from_polar(rho, t / mu * (mu * dot(x, omega) - p.phase.value(x)))
    });
    let cap = (mu_min * mu_min * PI / (z.re.abs() * t + 1e-300)).min(0.05).max(1e-4);
    let opts = GkOptions { abs_tol: 1e-12, rel_tol: 1e-9, max_width: cap, max_evals: 20_000 };
    let (v, err, _) = gk_scalar(|mu| (I * z * t / mu).exp() / (mu * mu) * j2(mu, n), &[mu_min, 1.0], &opts);
    Ok((v, err))
}

pub fn mu_route_oscillations(z: C64, t: f64) -> f64 {
    if z.im <= 0.0 {
        return f64::INFINITY;
    }
    let mu_min = (z.im * t / 40.0).min(1.0);
    z.re.abs() * t * (1.0 / mu_min - 1.0) / (2.0 * PI) + t / (2.0 * PI)
}

pub fn eval_i(p: &PhaseProblem, z: C64, t: f64, omega: &[f64], o: &OscOptions) -> Result<OscSample> {
    let (iv, ie) = eval_i_total(p, z, t, omega, o)?;
    let (i1, e1) = eval_i1(p, z, t, omega, o)?;
    let (i2, e2, route) = if mu_route_oscillations(z, t) <= o.mu_route_max_oscillations {
        let (v, e) = eval_i2_mu(p, z, t, omega, o)?;
        (v, e, SecondRoute::MuIntegral)
    } else {
        (iv - i1, ie + e1, SecondRoute::Complement)
    };
    Ok(OscSample {
        z,
        t,
        omega: omega.to_vec(),
        i_value: iv,
        i1_value: i1,
        i2_value: i2,
        m_value: iv * t.powf(p.dim() as f64 / 2.0),
        i_error: ie,
        i1_error: e1,
        i2_error: e2,
        i2_route: route,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayOrder {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    /// None when I₁ vanishes identically.
    pub slope: Option<f64>,
    pub order: u32,
    pub pass: bool,
}

/// Log-log slope of |I₁| against t; passes when slope <= -N + 0.3.
pub fn eval_i1_decay(p: &PhaseProblem, z: C64, ts: &[f64], order: u32, omega: &[f64], o: &OscOptions) -> Result<DecayOrder> {
    if ts.len() < 2 {
        return Err(LapError::ParameterOutOfRange("need at least two t values".into()));
    }
    let values: Vec<f64> = ts.iter().map(|&t| eval_i1(p, z, t, omega, o).map(|(v, _)| v.norm())).collect::<Result<_>>()?;
    if values.iter().all(|&v| v == 0.0) {
        return Ok(DecayOrder { ts: ts.to_vec(), values, slope: None, order, pass: true });
    }
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.max(1e-300).ln()).collect();
    let (slope, _, _) = crate::green::extrapolate::fit_line(&x, &y);
    Ok(DecayOrder { ts: ts.to_vec(), values, slope: Some(slope), order, pass: slope <= -(order as f64) + 0.3 })
}

/// θ(μ,ω) = (∇f)^{-1}(μω) by Newton from x0.
pub fn theta(p: &PhaseProblem, mu: f64, omega: &[f64]) -> Result<Vec<f64>> {
    let d = p.dim();
    let mut x = p.x0.clone();
    for _ in 0..100 {
        let g = p.phase.gradient(&x);
        let res: Vec<f64> = (0..d).map(|i| g[i] - mu * omega[i]).collect();
        let rn = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= 1e-15 {
            return Ok(x);
        }
        let h = p.phase.hessian(&x);
        let step = h.lu().solve(&nalgebra::DVector::from_vec(res)).ok_or_else(|| LapError::NewtonFailure("singular Hessian".into()))?;
        for i in 0..d {
            x[i] -= step[i];
        }
    }
    let g = p.phase.gradient(&x);
    let rn = (0..d).map(|i| (g[i] - mu * omega[i]).powi(2)).sum::<f64>().sqrt();
    if rn <= 1e-12 {
        Ok(x)
    } else {
        Err(LapError::NewtonFailure(format!("θ(μ = {mu}) residual {rn:e}")))
    }
}

/// max_y |Φ₂(y) - Φ₂(θ) + ½<y-θ, F(y)(y-θ)>| with Φ₂(x) = μ<x,ω> - f(x) and
/// F(y) = 2∫_0^1 (1-s) ∇²f((1-s)θ + s y) ds.
pub fn morse_residual(p: &PhaseProblem, mu: f64, omega: &[f64], ys: &[Vec<f64>]) -> Result<f64> {
    check_omega(p, omega)?;
    if !(mu >= 0.0 && mu < p.r) {
        return Err(LapError::PreconditionViolated(format!("μ = {mu} must lie in [0, r = {:.4})", p.r)));
    }
    let th = theta(p, mu, omega)?;
    let phi2 = |x: &[f64]| mu * dot(x, omega) - p.phase.value(x);
    let (s, w) = gauss_legendre_on(24, 0.0, 1.0);
    let d = p.dim();
    let mut worst: f64 = 0.0;
    for y in ys {
        let mut f = DMatrix::zeros(d, d);
        for (si, wi) in s.iter().zip(&w) {
            let pt: Vec<f64> = th.iter().zip(y).map(|(a, b)| (1.0 - si) * a + si * b).collect();
            f += p.phase.hessian(&pt) * (2.0 * (1.0 - si) * wi);
        }
        let dy = nalgebra::DVector::from_iterator(d, y.iter().zip(&th).map(|(a, b)| a - b));
        let quad = dy.dot(&(&f * &dy));
        worst = worst.max((phi2(y) - phi2(&th) + 0.5 * quad).abs());
    }
    Ok(worst)
}

/// Largest |M(z) - M(z')| / (t |z - z'|)^β over pairs of `zs`.
pub fn holder_constant(p: &PhaseProblem, zs: &[C64], t: f64, omega: &[f64], beta: f64, o: &OscOptions) -> Result<f64> {
    let ms: Vec<C64> = zs.iter().map(|&z| eval_i_total(p, z, t, omega, o).map(|(v, _)| v * t.powf(p.dim() as f64 / 2.0))).collect::<Result<_>>()?;
    let mut c: f64 = 0.0;
    for i in 0..zs.len() {
        for j in i + 1..zs.len() {
            let dz = (zs[i] - zs[j]).norm();
            if dz > 0.0 {
                c = c.max((ms[i] - ms[j]).norm() / (t * dz).powf(beta));
            }
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylSplit {
    pub t: f64,
    pub z: C64,
    pub eta0: f64,
    pub eta1: f64,
    pub i_le: C64,
    pub i_par: C64,
    pub i_ge: C64,
    pub total: C64,
    /// I_∥ recomputed in the Weyl chart coordinates, where E_+ - e_w = |x|.
    pub i_par_chart: C64,
    pub error: f64,
}

/// Three-range η-split of
/// I(z,ω,t) = it ∫_0^∞dη e^{iztη} ∫dk e^{it<k,ω> - itη E_+(k)} ρ₁(k)/(E_-(k) - z)
/// around the Weyl point of `chart`, with ρ₁ a bump of radius `rho_radius`.
#[allow(clippy::too_many_arguments)]
pub fn weyl_split(chart: &WeylChart, z: C64, t: f64, omega: &[f64], eta0: f64, eta1: f64, rho_radius: f64, n_ang: usize) -> Result<WeylSplit> {
    if !(0.0 <= eta0 && eta0 < eta1) {
        return Err(LapError::ParameterOutOfRange(format!("need 0 <= η0 < η1, got {eta0}, {eta1}")));
    }
    if z.im < 0.0 || !(t >= 1.0) || omega.len() != 3 {
        return Err(LapError::PreconditionViolated("need Im z >= 0, t >= 1 and ω in S²".into()));
    }
    let two = &chart.two;
    let ew = two.energy;
    if z.im == 0.0 && (z.re - ew).abs() > 1e-12 {
        return Err(LapError::PreconditionViolated("real z is supported only at the node energy".into()));
    }
    let kw = two.center.clone();
    let r1 = 0.5 * rho_radius;
    let rho = |q: f64| smooth_step((q - r1) / (rho_radius - r1));
    let factors = |ep: f64, em: f64| -> [C64; 4] {
        let a = z - ep;
        let den = C64::new(em, 0.0) - z;
        let le = I * t * eta0 * eta_unit(t * eta0 * a) / den;
        let par = I * t * (I * t * eta0 * a).exp() * (eta1 - eta0) * eta_unit(t * (eta1 - eta0) * a) / den;
        let ge = -(I * t * eta1 * a).exp() / (a * den);
        let total = -C64::new(1.0, 0.0) / (a * den);
        [le, par, ge, total]
    };
    let fr = frame3(omega);
    let panels = ((t * rho_radius / 2.0).ceil() as usize + 2).max(3);
    let radial = |hi: f64| -> Vec<(f64, f64)> {
        let mut v = Vec::new();
        for q in 0..panels {
            let (x, w) = gauss_legendre_on(16, hi * q as f64 / panels as f64, hi * (q + 1) as f64 / panels as f64);
            v.extend(x.into_iter().zip(w));
        }
        v
    };
    let run_k = |n: usize| -> Result<[C64; 4]> {
        let rule = sphere_rule(n, n);
        let rad = radial(rho_radius);
        let parts: Vec<[C64; 4]> = rule
            .par_iter()
            .map(|&(u, az, w)| -> Result<[C64; 4]> {
                let s = (1.0 - u * u).sqrt();
                let dir: Vec<f64> = (0..3).map(|i| u * fr[0][i] + s * (az.cos() * fr[1][i] + az.sin() * fr[2][i])).collect();
                let mut acc = [ZERO; 4];
                for &(q, wq) in &rad {
                    let k: Vec<f64> = kw.iter().zip(&dir).map(|(a, b)| a + q * b).collect();
                    let (em, ep) = two.bands(&k)?;
                    let amp = C64::from_polar(q * q * rho(q) * wq * w, t * q * u);
                    let f = factors(ep, em);
                    for c in 0..4 {
                        acc[c] += amp * f[c];
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut tot = [ZERO; 4];
        for p in parts {
            for c in 0..4 {
                tot[c] += p[c];
            }
        }
        Ok(tot)
    };
    let coarse = run_k(n_ang)?;
    let fine = run_k(n_ang + n_ang / 2)?;
    let error = (0..4).map(|c| (coarse[c] - fine[c]).norm()).fold(0.0, f64::max);

    // Chart coordinates: x = (E_+(k) - e_w) ĥ(k), so the η-factor depends on |x| only.
    let mut x_max: f64 = 0.0;
    for dir in unit_directions(3, 16) {
        let k: Vec<f64> = kw.iter().zip(&dir).map(|(a, b)| a + rho_radius * b).collect();
        x_max = x_max.max(two.bands(&k)?.1 - ew);
    }
    let x_hi = 1.05 * x_max;
    if x_hi >= chart.r_max {
        return Err(LapError::OutOfRange { r: x_hi, limit: chart.r_max });
    }
    let rule = sphere_rule(n_ang, n_ang);
    let rad = radial(x_hi);
    let parts: Vec<C64> = rule
        .par_iter()
        .map(|&(u, az, w)| -> Result<C64> {
            let s = (1.0 - u * u).sqrt();
            let th = [
                u * fr[0][0] + s * (az.cos() * fr[1][0] + az.sin() * fr[2][0]),
                u * fr[0][1] + s * (az.cos() * fr[1][1] + az.sin() * fr[2][1]),
                u * fr[0][2] + s * (az.cos() * fr[1][2] + az.sin() * fr[2][2]),
            ];
            let mut acc = ZERO;
            let mut warm: Option<Vec<f64>> = None;
            for &(r, wr) in &rad {
                let x = [r * th[0], r * th[1], r * th[2]];
                let k = weyl_chart_warm(chart, &x, warm.as_deref())?;
                let q = k.iter().zip(&kw).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let weight = rho(q);
                if weight > 0.0 {
                    let jac = chart_map_jacobian(chart, &k)?;
                    let (em, _) = two.bands(&k)?;
                    let ph = t * k.iter().zip(&kw).zip(omega).map(|((a, b), c)| (a - b) * c).sum::<f64>();
                    let f = factors(ew + r, em);
                    acc += C64::from_polar(r * r * weight * wr * w / jac, ph) * f[1];
                }
                warm = Some(k);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let i_par_chart: C64 = parts.iter().sum();
    Ok(WeylSplit { t, z, eta0, eta1, i_le: fine[0], i_par: fine[1], i_ge: fine[2], total: fine[3], i_par_chart, error })
}

/// |det ∂x/∂k| for the chart x(k) = (E_+(k) - e_w) h(k)/|h(k)|.
pub fn chart_map_jacobian(chart: &WeylChart, k: &[f64]) -> Result<f64> {
    let two = &chart.two;
    let (e, h) = two.eh(k)?;
    let (ge, dh) = two.derivatives(k)?;
    let hn = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
    let hv = nalgebra::Vector3::new(h[0], h[1], h[2]);
    let hat = hv / hn;
    let rad = e - two.energy + hn;
    // ∂(ĥ)/∂k = (I - ĥĥ^T) Dh / |h|; ∂rad/∂k = ∇e + ĥ^T Dh.
    let proj = nalgebra::Matrix3::identity() - hat * hat.transpose();
    let dhat = proj * dh / hn;
    let grad_rad = nalgebra::Vector3::new(ge[0], ge[1], ge[2]) + dh.transpose() * hat;
    let jac = hat * grad_rad.transpose() + dhat * rad;
    Ok(jac.determinant().abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::weyl::{find_weyl_points, WeylChart};

    fn definite3() -> PhaseProblem {
        PhaseProblem::new(Arc::new(CubicPhase::definite(3)), &[0.0; 3], 0.2, 0.45).unwrap()
    }

    #[test]
    fn singular_line_matches_closed_form() {
        // ∫_0^2 ds / (1 + i0 - s) = -ln(1) ... PV ∫_0^2 ds/(1-s) = 0, plus -iπ.
        let (v, _) = singular_line(|_| C64::new(1.0, 0.0), |s| s, C64::new(1.0, 0.0), 0.0, 2.0, 1.0, 1e-12);
        assert!((v - C64::new(0.0, -PI)).norm() < 1e-10, "{v}");
        // Im z > 0: ∫_0^2 ds/(z - s) = ln(z) - ln(z - 2).
        let z = C64::new(1.0, 0.01);
        let (v, _) = singular_line(|_| C64::new(1.0, 0.0), |s| s, z, 0.0, 2.0, 1.0, 1e-12);
        let want = z.ln() - (z - 2.0).ln();
        assert!((v - want).norm() < 1e-9, "{v} {want}");
        // Quadratic phase with a smooth weight: compare with a tiny ε.
        let g = |s: f64| C64::new((1.0 + s).cos(), s);
        let (a, _) = singular_line(g, |s| s * s, C64::new(0.5, 0.0), 0.0, 1.5, 1.0, 1e-12);
        let (b, _) = singular_line(g, |s| s * s, C64::new(0.5, 1e-7), 0.0, 1.5, 1.0, 1e-12);
        assert!((a - b).norm() < 1e-5, "{a} {b}");
    }

    #[test]
    fn gaussian_like_closed_forms_at_t_one() {
        // For Im z large the total reduces to (i/t)∫ e^{itx·ω} ρ/(z - f): compare
        // the polar route with the tensor grid.
        let p = definite3();
        let z = C64::new(0.2, 1.0);
        let omega = [1.0, 0.0, 0.0];
        let o = OscOptions::default();
        let (v, _) = eval_i_total(&p, z, 1.0, &omega, &o).unwrap();
        let grid = I * grid_sum(&p, 96, |x| C64::from_polar(p.rho(x), x[0]) / (z - p.phase.value(x)));
        assert!((v - grid).norm() < 1e-8 * grid.norm(), "{v} {grid}");
    }

    #[test]
    fn split_consistency_with_mu_route() {
        let p = definite3();
        let o = OscOptions { grid_nodes: 48, ..Default::default() };
        let s = eval_i(&p, C64::new(0.1, 0.8), 2.0, &[0.0, 0.6, 0.8], &o).unwrap();
        assert_eq!(s.i2_route, SecondRoute::MuIntegral);
        let defect = (s.i_value - s.i1_value - s.i2_value).norm();
        assert!(defect <= 2.0 * (s.i_error + s.i1_error + s.i2_error) + 1e-12, "{defect:e} {s:?}");
        assert!(defect < 1e-6);
    }

    #[test]
    fn morse_identity() {
        let p = definite3();
        let ys = vec![vec![0.1, 0.2, -0.1], vec![0.3, 0.0, 0.1]];
        assert!(morse_residual(&p, 0.2, &[1.0, 0.0, 0.0], &ys).unwrap() <= 1e-12);
        let cubic = PhaseProblem::new(Arc::new(CubicPhase::definite(3).with_cubic(vec![0.1, 0.0, 0.0])), &[0.0; 3], 0.2, 0.4).unwrap();
        assert!(morse_residual(&cubic, 0.1, &[1.0, 0.0, 0.0], &ys).unwrap() <= 1e-9);
        assert_eq!(morse_residual(&p, 0.6, &[1.0, 0.0, 0.0], &ys).unwrap_err().name(), "PreconditionViolated");
    }

    #[test]
    fn zero_amplitude_is_exact_zero() {
        let p = definite3().with_amplitude(0.0);
        let r = eval_i1_decay(&p, C64::new(0.0, 1.0), &[8.0, 16.0], 2, &[1.0, 0.0, 0.0], &OscOptions { grid_nodes: 16, ..Default::default() }).unwrap();
        assert!(r.slope.is_none() && r.pass);
    }

    #[test]
    fn weyl_split_sums_and_chart_route() {
        let m = reference::weyl_toy(0.5);
        let pts = find_weyl_points(&m, 8).unwrap();
        let w = pts.iter().find(|p| p.k_w.iter().all(|x| x.abs() < 1e-9)).unwrap();
        let chart = WeylChart::from_point(&m, w, 0.5).unwrap();
        let s = weyl_split(&chart, C64::new(w.energy, 0.0), 4.0, &[1.0, 0.0, 0.0], 0.75, 1.25, 0.12, 20).unwrap();
        assert!((s.i_le + s.i_par + s.i_ge - s.total).norm() < 1e-10 * s.total.norm().max(1.0));
        assert!((s.i_par - s.i_par_chart).norm() < 1e-3 * s.i_par.norm().max(1e-12), "{:?}", s);
        assert_eq!(weyl_split(&chart, C64::new(0.0, 0.0), 4.0, &[1.0, 0.0, 0.0], 1.0, 0.5, 0.12, 8).unwrap_err().name(), "ParameterOutOfRange");
    }
}
