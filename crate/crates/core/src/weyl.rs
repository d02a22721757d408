//! Two-band degeneracies: detection, e/h decomposition, the Weyl Morse chart
//! and the sphere phase check.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bands::{diagonalize_fiber, BandBlock};
use crate::critical::{check_morse, find_critical_points_with, CriticalOptions};
use crate::error::{LapError, Result};
use crate::linalg::{loewdin, pauli, CMat};
use crate::model::{eval_symbol, HoppingModel};
use crate::torus::{seed_grid, torus_delta, torus_distance, wrap_point};

#[derive(Clone, Debug, Serialize)]
pub struct WeylPoint {
    pub k_w: Vec<f64>,
    pub energy: f64,
    pub pair: (usize, usize),
    pub h_jac: [[f64; 3]; 3],
    pub det_h_jac: f64,
    pub grad_e: [f64; 3],
    pub tilt_kappa: f64,
    pub type_one: bool,
    pub gamma: f64,
    pub gap: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct WeylOptions {
    pub grid_res: usize,
    /// Radius of the working ball around each point.
    pub tau: f64,
    pub gap_tol: f64,
    pub separation: f64,
    pub dedup_tol: f64,
    pub gamma_samples: usize,
    pub seed: u64,
}

impl Default for WeylOptions {
    fn default() -> Self {
        WeylOptions { grid_res: 8, tau: 0.5, gap_tol: 1e-8, separation: 1e-4, dedup_tol: 1e-6, gamma_samples: 400, seed: 7 }
    }
}

fn pauli_coords(m: &CMat) -> (f64, [f64; 3]) {
    let s = pauli();
    let e = 0.5 * (m[(0, 0)] + m[(1, 1)]).re;
    let mut h = [0.0; 3];
    for j in 0..3 {
        h[j] = 0.5 * (&s[j] * m).trace().re;
    }
    (e, h)
}

fn norm3(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projected 2x2 symbol Φ^dagger E Φ around a Weyl point, with
/// E_W(k) = e(k) 1 + <h(k), σ>.
#[derive(Clone, Debug)]
pub struct LocalTwoBand {
    model: HoppingModel,
    pub center: Vec<f64>,
    pub block: BandBlock,
    pub frame0: CMat,
    pub radius: f64,
    pub energy: f64,
}

impl LocalTwoBand {
    pub fn new(model: &HoppingModel, center: &[f64], block: BandBlock, radius: f64) -> Result<Self> {
        if model.dim() != 3 || model.fiber_size() < 2 {
            return Err(LapError::PreconditionViolated("two-band reduction needs d = 3 and L >= 2".into()));
        }
        let spec = diagonalize_fiber(model, center)?;
        let frame0 = if model.fiber_size() == 2 { CMat::identity(2, 2) } else { spec.block_vectors(block) };
        let energy = 0.5 * (spec.eigenvalues[block.first] + spec.eigenvalues[block.first + 1]);
        Ok(LocalTwoBand { model: model.clone(), center: center.to_vec(), block, frame0, radius, energy })
    }

    pub fn model(&self) -> &HoppingModel {
        &self.model
    }

    pub fn frame(&self, k: &[f64]) -> Result<CMat> {
        if self.model.fiber_size() == 2 {
            return Ok(self.frame0.clone());
        }
        let spec = diagonalize_fiber(&self.model, k)?;
        let p = spec.block_projector(self.block);
        loewdin(&(p * &self.frame0)).ok_or(LapError::GapClosure(0))
    }

    pub fn reduced(&self, k: &[f64]) -> Result<CMat> {
        let f = self.frame(k)?;
        Ok(f.adjoint() * self.model.symbol(k) * &f)
    }

    /// (e(k), h(k)).
    pub fn eh(&self, k: &[f64]) -> Result<(f64, [f64; 3])> {
        Ok(pauli_coords(&self.reduced(k)?))
    }

    /// (∇e, Dh) from the derivative of the symbol in the frame at `k`.
    /// Exact at the degeneracy and for L = 2.
    pub fn derivatives(&self, k: &[f64]) -> Result<([f64; 3], Matrix3<f64>)> {
        let f = self.frame(k)?;
        let sym = eval_symbol(&self.model, k, 1);
        let mut ge = [0.0; 3];
        let mut dh = Matrix3::zeros();
        for c in 0..3 {
            let red = f.adjoint() * &sym.gradient[c] * &f;
            let (e, h) = pauli_coords(&red);
            ge[c] = e;
            for j in 0..3 {
                dh[(j, c)] = h[j];
            }
        }
        Ok((ge, dh))
    }

    /// Upper and lower reduced bands e ± |h|.
    pub fn bands(&self, k: &[f64]) -> Result<(f64, f64)> {
        let (e, h) = self.eh(k)?;
        let r = norm3(&h);
        Ok((e - r, e + r))
    }

    /// Solve h(k) = x by Newton, starting from `start` (or the centre).
    pub fn h_inverse(&self, x: &[f64; 3], start: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut k: Vec<f64> = start.map(|s| s.to_vec()).unwrap_or_else(|| self.center.clone());
        let target = Vector3::from_column_slice(x);
        let mut best = f64::INFINITY;
        for _ in 0..60 {
            let (_, h) = self.eh(&k)?;
            let res = Vector3::from_column_slice(&h) - target;
            let rn = res.norm();
            best = best.min(rn);
            if rn <= 1e-14 * (1.0 + target.norm()) {
                return Ok(k);
            }
            let (_, dh) = self.derivatives(&k)?;
            let step = dh.lu().solve(&(-res)).ok_or(LapError::InversionFailure(rn))?;
            let sn = step.norm();
            let scale = if sn > 0.25 { 0.25 / sn } else { 1.0 };
            for j in 0..3 {
                k[j] += scale * step[j];
            }
            if sn < 1e-15 {
                break;
            }
        }
        let (_, h) = self.eh(&k)?;
        let rn = (Vector3::from_column_slice(&h) - target).norm();
        if rn <= 1e-11 * (1.0 + target.norm()) {
            Ok(k)
        } else {
            Err(LapError::InversionFailure(rn.min(best)))
        }
    }

    /// γ with |k - k_w| / γ <= |h(k)| <= γ |k - k_w| on sampled points of
    /// the pointed ball of radius `tau`.
    pub fn gamma(&self, tau: f64, samples: usize, seed: u64) -> Result<f64> {
        let mut g: f64 = 1.0;
        for k in ball_samples(&self.center, tau, samples, seed) {
            let (_, h) = self.eh(&k)?;
            let r = norm3(&torus_delta(&self.center, &k));
            let hn = norm3(&h);
            if hn == 0.0 {
                return Err(LapError::HypothesisViolated("h vanishes away from the Weyl point".into()));
            }
            g = g.max(hn / r).max(r / hn);
        }
        Ok(g)
    }

    /// Radius ζ of a ball in h-space covered by h(B_tau).
    pub fn h_radius(&self, gamma: f64) -> f64 {
        self.radius / gamma
    }

    /// f(t, θ) = e(h^{-1}(tθ)) - e(k_w) + t.
    pub fn radial_defect(&self, t: f64, theta: &[f64; 3], start: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        let x = [t * theta[0], t * theta[1], t * theta[2]];
        let k = self.h_inverse(&x, start)?;
        let (e, _) = self.eh(&k)?;
        Ok((e - self.energy + t, k))
    }
}

/// Points in the pointed ball: uniform random plus radial shells along the
/// 26 lattice directions.
pub fn ball_samples(center: &[f64], tau: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n + 26 * 4);
    for dir in directions26() {
        for &f in &[0.05, 0.3, 0.6, 1.0] {
            out.push((0..3).map(|j| center[j] + f * tau * dir[j]).collect());
        }
    }
    while out.len() < n + 26 * 4 {
        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let r = norm3(&v);
        if r > 1e-3 && r <= 1.0 {
            out.push((0..3).map(|j| center[j] + tau * v[j]).collect());
        }
    }
    out
}

/// Unit vectors towards the 26 neighbours of a cubic lattice site.
pub fn directions26() -> Vec<[f64; 3]> {
    let mut v = Vec::new();
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                if a == 0 && b == 0 && c == 0 {
                    continue;
                }
                let n = ((a * a + b * b + c * c) as f64).sqrt();
                v.push([a as f64 / n, b as f64 / n, c as f64 / n]);
            }
        }
    }
    v
}

fn to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = m[(i, j)];
        }
    }
    a
}

/// Newton on h(k) = 0 with the pair frame taken at the iterate.
fn degeneracy_newton(model: &HoppingModel, pair: usize, seed: &[f64]) -> Option<Vec<f64>> {
    let block = BandBlock::pair(pair);
    let s = pauli();
    let mut k = seed.to_vec();
    for _ in 0..60 {
        let spec = diagonalize_fiber(model, &k).ok()?;
        let f = spec.block_vectors(block);
        let sym = eval_symbol(model, &k, 1);
        let red = f.adjoint() * &sym.value * &f;
        let (_, h) = pauli_coords(&red);
        let hn = norm3(&h);
        if hn < 1e-13 {
            return Some(wrap_point(&k));
        }
        let mut dh = Matrix3::zeros();
        for c in 0..3 {
            let r = f.adjoint() * &sym.gradient[c] * &f;
            for j in 0..3 {
                dh[(j, c)] = 0.5 * (&s[j] * &r).trace().re;
            }
        }
        let step = dh.lu().solve(&(-Vector3::from_column_slice(&h)))?;
        let sn = step.norm();
        let scale = if sn > 0.5 { 0.5 / sn } else { 1.0 };
        for j in 0..3 {
            k[j] += scale * step[j];
        }
        if sn < 1e-15 {
            break;
        }
    }
    let spec = diagonalize_fiber(model, &k).ok()?;
    if spec.eigenvalues[pair + 1] - spec.eigenvalues[pair] < 1e-10 {
        Some(wrap_point(&k))
    } else {
        None
    }
}

pub fn find_weyl_points(model: &HoppingModel, grid_res: usize) -> Result<Vec<WeylPoint>> {
    find_weyl_points_with(model, &WeylOptions { grid_res, ..Default::default() })
}

pub fn find_weyl_points_with(model: &HoppingModel, o: &WeylOptions) -> Result<Vec<WeylPoint>> {
    if model.dim() != 3 || model.fiber_size() < 2 {
        return Err(LapError::PreconditionViolated("Weyl search needs d = 3 and L >= 2".into()));
    }
    let seeds = seed_grid(3, o.grid_res);
    let l = model.fiber_size();
    let mut found: Vec<(usize, Vec<f64>)> = Vec::new();
    for pair in 0..l - 1 {
        let hits: Vec<Vec<f64>> = seeds.par_iter().filter_map(|s| degeneracy_newton(model, pair, s)).collect();
        for k in hits {
            found.push((pair, k));
        }
    }
    for (_, k) in found.iter_mut() {
        for x in k.iter_mut() {
            if (x.abs() - std::f64::consts::PI).abs() < 1e-12 {
                *x = std::f64::consts::PI;
            }
        }
    }
    found.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            a.1.iter().zip(&b.1).map(|(x, y)| x.total_cmp(y)).find(|c| c.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut unique: Vec<(usize, Vec<f64>)> = Vec::new();
    for (p, k) in found {
        if !unique.iter().any(|(q, u)| *q == p && torus_distance(u, &k) < o.dedup_tol) {
            unique.push((p, k));
        }
    }
    let mut out = Vec::new();
    for (pair, k) in unique {
        let spec = diagonalize_fiber(model, &k)?;
        let e = &spec.eigenvalues;
        let gap = e[pair + 1] - e[pair];
        if gap > o.gap_tol {
            continue;
        }
        let below = if pair > 0 { e[pair] - e[pair - 1] } else { f64::INFINITY };
        let above = if pair + 2 < l { e[pair + 2] - e[pair + 1] } else { f64::INFINITY };
        if below <= o.separation || above <= o.separation {
            return Err(LapError::HigherDegeneracy(k));
        }
        let two = LocalTwoBand::new(model, &k, BandBlock::pair(pair), o.tau)?;
        let (ge, dh) = two.derivatives(&k)?;
        let det = dh.determinant();
        let kappa = match dh.transpose().lu().solve(&Vector3::from_column_slice(&ge)) {
            Some(v) => v.norm(),
            None => f64::INFINITY,
        };
        let gamma = if det.abs() > 1e-8 { two.gamma(o.tau, o.gamma_samples, o.seed)? } else { f64::INFINITY };
        out.push(WeylPoint {
            k_w: k,
            energy: two.energy,
            pair: (pair, pair + 1),
            h_jac: to_array(&dh),
            det_h_jac: det,
            grad_e: ge,
            tilt_kappa: kappa,
            type_one: kappa < 1.0 - 1e-9,
            gamma,
            gap,
        });
    }
    Ok(out)
}

/// R = 0.9 min over 26 directions of |f(±ζ, θ)|.
pub fn chart_radius(two: &LocalTwoBand, zeta: f64) -> Result<f64> {
    let mut r = f64::INFINITY;
    for th in directions26() {
        let (fp, _) = two.radial_defect(zeta, &th, None)?;
        let (fm, _) = two.radial_defect(-zeta, &th, None)?;
        if !(fp > 0.0 && fm < 0.0) {
            return Err(LapError::HypothesisViolated(format!(
                "radial defect is not monotone along {th:?} (f(+z) = {fp}, f(-z) = {fm})"
            )));
        }
        r = r.min(fp.abs()).min(fm.abs());
    }
    Ok(0.9 * r)
}

/// Morse-chart data for one Weyl point: the ball radius ζ in h-space and
/// the admissible |r| < R.
#[derive(Clone, Debug)]
pub struct WeylChart {
    pub two: LocalTwoBand,
    pub zeta: f64,
    pub r_max: f64,
}

impl WeylChart {
    pub fn new(two: LocalTwoBand, gamma: f64) -> Result<Self> {
        let zeta = two.h_radius(gamma);
        let r_max = chart_radius(&two, zeta)?;
        Ok(WeylChart { two, zeta, r_max })
    }

    /// Build from a detected point using its γ.
    pub fn from_point(model: &HoppingModel, w: &WeylPoint, tau: f64) -> Result<Self> {
        if !w.type_one {
            return Err(LapError::HypothesisViolated(format!("tilt κ = {} is not below 1", w.tilt_kappa)));
        }
        let two = LocalTwoBand::new(model, &w.k_w, BandBlock { first: w.pair.0, count: 2 }, tau)?;
        WeylChart::new(two, w.gamma)
    }
}

/// s(r, θ): the unique t with e(h^{-1}(tθ)) - e(k_w) + t = r.
pub fn solve_s(chart: &WeylChart, r: f64, theta: &[f64; 3]) -> Result<f64> {
    solve_s_warm(chart, r, theta, None).map(|(s, _)| s)
}

/// As [`solve_s`], also returning h^{-1}(sθ); `start` seeds the inversion.
pub fn solve_s_warm(chart: &WeylChart, r: f64, theta: &[f64; 3], start: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    if !(r.abs() < chart.r_max) {
        return Err(LapError::OutOfRange { r, limit: chart.r_max });
    }
    let n = norm3(theta);
    let th = [theta[0] / n, theta[1] / n, theta[2] / n];
    if r == 0.0 {
        return Ok((0.0, chart.two.center.clone()));
    }
    let two = &chart.two;
    let (mut lo, mut hi) = (-chart.zeta, chart.zeta);
    let mut t = r;
    let mut k_prev: Option<Vec<f64>> = start.map(|s| s.to_vec());
    for _ in 0..100 {
        t = t.clamp(lo, hi);
        let (f, k) = two.radial_defect(t, &th, k_prev.as_deref())?;
        let g = f - r;
        if g.abs() <= 1e-12 {
            return Ok((t, k));
        }
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let dt = 1e-7 * (1.0 + t.abs());
        let (f2, _) = two.radial_defect(t + dt, &th, Some(&k))?;
        let slope = (f2 - f) / dt;
        let mut next = t - g / slope;
        if !(slope > 0.0) || !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        k_prev = Some(k);
        if (hi - lo) < 1e-15 {
            break;
        }
        t = next;
    }
    let (f, k) = two.radial_defect(t, &th, k_prev.as_deref())?;
    if (f - r).abs() <= 1e-10 {
        Ok((t, k))
    } else {
        Err(LapError::HypothesisViolated(format!("radial root not found for r = {r}")))
    }
}

/// φ(x) = h^{-1}(s(|x|, x̂) x̂); checks E_+(φ(x)) - e(k_w) = |x|.
pub fn weyl_chart(chart: &WeylChart, x: &[f64; 3]) -> Result<Vec<f64>> {
    weyl_chart_warm(chart, x, None)
}

pub fn weyl_chart_warm(chart: &WeylChart, x: &[f64; 3], start: Option<&[f64]>) -> Result<Vec<f64>> {
    let r = norm3(x);
    if r == 0.0 {
        return Err(LapError::PreconditionViolated("chart is evaluated only for x != 0".into()));
    }
    let th = [x[0] / r, x[1] / r, x[2] / r];
    let (_, k) = solve_s_warm(chart, r, &th, start)?;
    let (_, up) = chart.two.bands(&k)?;
    let defect = (up - chart.two.energy - r).abs();
    if defect > 1e-8 {
        return Err(LapError::InversionFailure(defect));
    }
    Ok(k)
}

/// |det Dφ(x)| by central differences.
pub fn chart_jacobian_det(chart: &WeylChart, x: &[f64; 3]) -> Result<f64> {
    let base = weyl_chart(chart, x)?;
    let h = 1e-5 * norm3(x).max(1e-3);
    let mut j = Matrix3::zeros();
    for c in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[c] += h;
        xm[c] -= h;
        let kp = weyl_chart_warm(chart, &xp, Some(&base))?;
        let km = weyl_chart_warm(chart, &xm, Some(&base))?;
        for r in 0..3 {
            j[(r, c)] = (kp[r] - km[r]) / (2.0 * h);
        }
    }
    Ok(j.determinant().abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereCritical {
    pub theta: [f64; 3],
    pub value: f64,
    pub hessian_eigenvalues: [f64; 2],
    pub nondegenerate: bool,
}

/// Critical points of θ ↦ <θ, ω> / (μ θ_1 + 1) on the unit sphere.
pub fn sphere_phase_check(mu: f64, omega: &[f64; 3]) -> Result<Vec<SphereCritical>> {
    if !(0.0..1.0).contains(&mu) {
        return Err(LapError::ParameterOutOfRange(format!("mu = {mu} must lie in [0, 1)")));
    }
    let w = Vector3::from_column_slice(omega).normalize();
    let e1 = Vector3::new(1.0, 0.0, 0.0);
    let grad = |x: &Vector3<f64>| {
        let d = mu * x[0] + 1.0;
        w / d - e1 * (x.dot(&w) * mu / (d * d))
    };
    let hess = |x: &Vector3<f64>| {
        let d = mu * x[0] + 1.0;
        let n = x.dot(&w);
        -(w * e1.transpose() + e1 * w.transpose()) * (mu / (d * d)) + e1 * e1.transpose() * (2.0 * n * mu * mu / (d * d * d))
    };
    let tangent = |x: &Vector3<f64>| {
        let a = if x[0].abs() < 0.9 { e1 } else { Vector3::new(0.0, 1.0, 0.0) };
        let u = (a - x * x.dot(&a)).normalize();
        let v = x.cross(&u);
        (u, v)
    };
    let riemann = |x: &Vector3<f64>| {
        let (u, v) = tangent(x);
        let g = grad(x);
        let h = hess(x);
        let radial = x.dot(&g);
        let b = [u, v];
        let mut hm = nalgebra::Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                hm[(i, j)] = b[i].dot(&(h * b[j])) - if i == j { radial } else { 0.0 };
            }
        }
        (nalgebra::Vector2::new(u.dot(&g), v.dot(&g)), hm, u, v)
    };
    let mut found: Vec<Vector3<f64>> = Vec::new();
    for s in icosahedral_seeds() {
        let mut x = s;
        let mut ok = false;
        for _ in 0..100 {
            let (g, hm, u, v) = riemann(&x);
            if g.norm() < 1e-13 {
                ok = true;
                break;
            }
            let step = match hm.lu().solve(&(-g)) {
                Some(st) => st,
                None => -g,
            };
            let sn = step.norm();
            let sc = if sn > 0.3 { 0.3 / sn } else { 1.0 };
            x = (x + (u * step[0] + v * step[1]) * sc).normalize();
        }
        if ok && !found.iter().any(|y| (y - x).norm() < 1e-7) {
            found.push(x);
        }
    }
    found.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])).then(b[2].total_cmp(&a[2])));
    Ok(found
        .into_iter()
        .map(|x| {
            let (_, hm, _, _) = riemann(&x);
            let ev = nalgebra::SymmetricEigen::new(hm).eigenvalues;
            let (a, b) = if ev[0] <= ev[1] { (ev[0], ev[1]) } else { (ev[1], ev[0]) };
            SphereCritical {
                theta: [x[0], x[1], x[2]],
                value: x.dot(&w) / (mu * x[0] + 1.0),
                hessian_eigenvalues: [a, b],
                nondegenerate: a.abs().min(b.abs()) > 1e-8,
            }
        })
        .collect())
}

/// Icosahedron vertices plus face centres (32 points).
fn icosahedral_seeds() -> Vec<Vector3<f64>> {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v = Vec::new();
    for &a in &[-1.0, 1.0] {
        for &b in &[-p, p] {
            v.push(Vector3::new(0.0, a, b));
            v.push(Vector3::new(a, b, 0.0));
            v.push(Vector3::new(b, 0.0, a));
        }
    }
    let verts: Vec<Vector3<f64>> = v.iter().map(|x| x.normalize()).collect();
    let edge = (verts[0] - verts.iter().skip(1).min_by(|a, b| (*a - verts[0]).norm().total_cmp(&(*b - verts[0]).norm())).unwrap()).norm();
    let mut seeds = verts.clone();
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                let close = |a: usize, b: usize| ((verts[a] - verts[b]).norm() - edge).abs() < 1e-9;
                if close(i, j) && close(j, k) && close(i, k) {
                    seeds.push((verts[i] + verts[j] + verts[k]).normalize());
                }
            }
        }
    }
    seeds
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisVerdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub model: String,
    pub weyl_points: Vec<WeylPoint>,
    pub verdicts: Vec<HypothesisVerdict>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Numerical checks of: isolated degeneracies, multiplicity at most two,
/// Morse bands away from the degeneracies, and tilt below one.
pub fn check_hypotheses(model: &HoppingModel, wo: &WeylOptions, co: &CriticalOptions) -> Result<HypothesisReport> {
    let mut verdicts = Vec::new();
    let (points, hyp2) = if model.dim() == 3 && model.fiber_size() >= 2 {
        match find_weyl_points_with(model, wo) {
            Ok(p) => (p, HypothesisVerdict { name: "Hyp2".into(), pass: true, detail: "no degeneracy of multiplicity > 2".into() }),
            Err(LapError::HigherDegeneracy(k)) => {
                (Vec::new(), HypothesisVerdict { name: "Hyp2".into(), pass: false, detail: format!("HigherDegeneracy at {k:?}") })
            }
            Err(e) => return Err(e),
        }
    } else {
        (Vec::new(), HypothesisVerdict { name: "Hyp2".into(), pass: true, detail: "no band touchings possible".into() })
    };
    let isolated = points.iter().all(|p| p.det_h_jac.abs() > 1e-8);
    verdicts.push(HypothesisVerdict {
        name: "Hyp1".into(),
        pass: isolated,
        detail: format!("{} isolated points", points.len()),
    });
    verdicts.push(hyp2);
    let mut morse_ok = true;
    let mut detail = Vec::new();
    for band in 0..model.fiber_size() {
        let s = find_critical_points_with(model, band, co)?;
        let r = check_morse(&s.points, co.nondegeneracy_tol);
        morse_ok &= r.all_morse();
        detail.push(format!("band {band}: {} points, {} non-Morse", s.points.len(), r.violators.len()));
    }
    verdicts.push(HypothesisVerdict { name: "Hyp3".into(), pass: morse_ok, detail: detail.join("; ") });
    let kmax = points.iter().map(|p| p.tilt_kappa).fold(0.0, f64::max);
    verdicts.push(HypothesisVerdict {
        name: "Hyp4".into(),
        pass: points.iter().all(|p| p.type_one && p.det_h_jac.abs() > 1e-8),
        detail: format!("max kappa = {kmax}"),
    });
    Ok(HypothesisReport { model: model.name().to_string(), weyl_points: points, verdicts })
}

/// Largest τ in `taus` for which the h sandwich and type-I sign conditions
/// hold on sampled points.
pub fn tau_sensitivity(model: &HoppingModel, w: &WeylPoint, taus: &[f64], seed: u64) -> Result<Option<f64>> {
    let mut best = None;
    for &tau in taus {
        let two = LocalTwoBand::new(model, &w.k_w, BandBlock { first: w.pair.0, count: 2 }, tau)?;
        let gamma = match two.gamma(tau, 200, seed) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let mut ok = gamma.is_finite();
        for k in ball_samples(&w.k_w, tau, 100, seed + 1) {
            let (lo, hi) = two.bands(&k)?;
            let (_, h) = two.eh(&k)?;
            let r = norm3(&torus_delta(&w.k_w, &k));
            let hn = norm3(&h);
            ok &= r / gamma <= hn * (1.0 + 1e-12) && hn <= gamma * r * (1.0 + 1e-12);
            ok &= hi - two.energy >= -1e-12 && two.energy - lo >= -1e-12;
        }
        if ok {
            best = Some(best.map_or(tau, |b: f64| b.max(tau)));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    #[test]
    fn toy_has_eight_points() {
        let m = reference::weyl_toy(0.0);
        let pts = find_weyl_points(&m, 8).unwrap();
        assert_eq!(pts.len(), 8);
        let p0 = pts.iter().find(|p| p.k_w.iter().all(|x| x.abs() < 1e-9)).unwrap();
        assert!((p0.det_h_jac - 1.0).abs() < 1e-12 && p0.tilt_kappa.abs() < 1e-12 && p0.type_one);
    }

    #[test]
    fn tilt_values() {
        for (t, want, one) in [(0.5, 0.5, true), (1.5, 1.5, false)] {
            let pts = find_weyl_points(&reference::weyl_toy(t), 8).unwrap();
            let p0 = pts.iter().find(|p| p.k_w.iter().all(|x| x.abs() < 1e-9)).unwrap();
            assert!((p0.tilt_kappa - want).abs() < 1e-12);
            assert_eq!(p0.type_one, one);
        }
    }

    #[test]
    fn untilted_s_is_identity() {
        let m = reference::weyl_toy(0.0);
        let two = LocalTwoBand::new(&m, &[0.0; 3], BandBlock::pair(0), 0.8).unwrap();
        let g = two.gamma(0.8, 200, 1).unwrap();
        let chart = WeylChart::new(two, g).unwrap();
        for th in directions26().iter().take(5) {
            let s = solve_s(&chart, 0.1, th).unwrap();
            assert!((s - 0.1).abs() < 1e-11);
        }
        let k = weyl_chart(&chart, &[0.1, 0.0, 0.0]).unwrap();
        assert!((k[0] - 0.1f64.asin()).abs() < 1e-10 && k[1].abs() < 1e-12);
        let e = solve_s(&chart, 10.0, &[1.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(e.name(), "OutOfRange");
    }

    #[test]
    fn tilted_s_derivative() {
        let m = reference::weyl_toy(0.5);
        let two = LocalTwoBand::new(&m, &[0.0; 3], BandBlock::pair(0), 0.8).unwrap();
        let g = two.gamma(0.8, 200, 1).unwrap();
        let chart = WeylChart::new(two, g).unwrap();
        let r = 1e-4;
        for th in directions26() {
            let s = solve_s(&chart, r, &th).unwrap();
            let want = r / (1.0 + 0.5 * th[2]);
            assert!(((s - want) / want).abs() < 1e-3);
        }
    }

    #[test]
    fn sphere_critical_points() {
        let c = sphere_phase_check(0.0, &[0.3, -0.4, 0.5]).unwrap();
        assert_eq!(c.len(), 2);
        for p in &c {
            let s = if p.value > 0.0 { -1.0 } else { 1.0 };
            assert!((p.hessian_eigenvalues[0] - s).abs() < 1e-9 && (p.hessian_eigenvalues[1] - s).abs() < 1e-9);
        }
        let c = sphere_phase_check(0.5, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.len(), 2);
        let top = c.iter().find(|p| p.theta[0] > 0.5).unwrap();
        let want = -1.0 / 2.25;
        assert!((top.hessian_eigenvalues[0] - want).abs() < 1e-9 && (top.hessian_eigenvalues[1] - want).abs() < 1e-9);
        let c = sphere_phase_check(0.5, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|p| p.theta[2].abs() < 1e-9 && p.nondegenerate));
    }
}
