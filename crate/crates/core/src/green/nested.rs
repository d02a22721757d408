//! Nested adaptive quadrature of (2π)^{-d} ∫ e^{i<k,n>} ρ(k) (E(k) - z)^{-1} dk
//! for a tensor batch of offsets n.
//!
//! Axis 0 is outermost. The innermost axis is done by residues for
//! whole-torus windows and by adaptive Gauss-Kronrod otherwise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use super::residue::{line_integrals, LaurentLine};
use super::window::Window;
use crate::linalg::{fiber_eigenvalues, fiber_resolvent, C64, ZERO};
use crate::model::HoppingModel;
use crate::quad::{gk_adaptive, gk_adaptive_par, GkOptions};

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct GreenOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Relative tolerance of the inner (non-outermost) integrals.
    pub inner_rel_tol: f64,
    /// Node cap over all levels.
    pub max_evals: usize,
    pub level_max_evals: usize,
    pub parallel: bool,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-6,
            inner_rel_tol: 1e-8,
            max_evals: 400_000_000,
            level_max_evals: 400_000,
            parallel: true,
        }
    }
}

/// Per-axis plan: offsets to batch and whether the axis is folded onto
/// [0, π] using evenness of the symbol.
#[derive(Clone, Debug)]
pub struct AxisPlan {
    pub powers: Vec<i64>,
    pub fold: bool,
}

/// Coefficient-merging plan for fixing one coordinate.
#[derive(Clone, Debug)]
struct Level {
    n_out: usize,
    target: Vec<usize>,
    power: Vec<i64>,
}

#[derive(Clone, Debug)]
struct Levels {
    l2: usize,
    base: Vec<C64>,
    levels: Vec<Level>,
    line_powers: Vec<i64>,
}

impl Levels {
    fn new(model: &HoppingModel) -> Self {
        let d = model.dim();
        let l = model.fiber_size();
        let mut rest: Vec<Vec<i64>> = model.offsets().to_vec();
        let mut base = Vec::new();
        for i in 0..rest.len() {
            base.extend_from_slice(model.hop_row_major(i));
        }
        let mut levels = Vec::new();
        for _ in 0..d - 1 {
            let mut groups: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
            for m in &rest {
                let n = groups.len();
                groups.entry(m[1..].to_vec()).or_insert(n);
            }
            // Renumber groups in sorted order.
            let order: BTreeMap<usize, usize> = groups.values().enumerate().map(|(i, &g)| (g, i)).collect();
            let target = rest.iter().map(|m| order[&groups[&m[1..].to_vec()]]).collect();
            let power = rest.iter().map(|m| m[0]).collect();
            levels.push(Level { n_out: groups.len(), target, power });
            rest = groups.keys().cloned().collect();
        }
        let line_powers = rest.iter().map(|m| m[0]).collect();
        Levels { l2: l * l, base, levels, line_powers }
    }

    fn apply(&self, a: usize, coefs: &[C64], x: f64, out: &mut Vec<C64>) {
        let lv = &self.levels[a];
        out.clear();
        out.resize(lv.n_out * self.l2, ZERO);
        for (t, (&g, &p)) in lv.target.iter().zip(&lv.power).enumerate() {
            let e = C64::from_polar(1.0, p as f64 * x);
            let src = &coefs[t * self.l2..(t + 1) * self.l2];
            let dst = &mut out[g * self.l2..(g + 1) * self.l2];
            for (o, &v) in dst.iter_mut().zip(src) {
                *o += e * v;
            }
        }
    }
}

fn fetch_max(a: &AtomicU64, v: f64) {
    a.fetch_max(v.max(0.0).to_bits(), Ordering::Relaxed);
}

pub struct Nested<'a> {
    levels: Levels,
    l: usize,
    d: usize,
    z: C64,
    axes: Vec<AxisPlan>,
    window: &'a Window,
    /// k = A k' (row-major d x d); identity when no basis change.
    a: Vec<f64>,
    center: Option<(Vec<f64>, f64)>,
    opts: GreenOptions,
    level_err: Vec<AtomicU64>,
    unconverged: AtomicBool,
    evals: AtomicUsize,
}

#[derive(Clone, Debug)]
pub struct NestedResult {
    pub values: Vec<C64>,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

impl<'a> Nested<'a> {
    /// `a` maps integration coordinates to torus coordinates, k = a k'.
    pub fn new(model: &HoppingModel, z: C64, axes: Vec<AxisPlan>, window: &'a Window, a: Vec<f64>, opts: GreenOptions) -> Self {
        let d = model.dim();
        let center = match window {
            Window::Bump(b) => {
                let am = DMatrix::from_row_slice(d, d, &a);
                let inv = am.try_inverse().expect("basis change must be invertible");
                let c = inv * DVector::from_column_slice(&b.center);
                Some((c.iter().cloned().collect(), b.r2))
            }
            _ => None,
        };
        Nested {
            levels: Levels::new(model),
            l: model.fiber_size(),
            d,
            z,
            axes,
            window,
            a,
            center,
            opts,
            level_err: (0..d).map(|_| AtomicU64::new(0)).collect(),
            unconverged: AtomicBool::new(false),
            evals: AtomicUsize::new(0),
        }
    }

    /// Half-extent of the window support along each integration axis.
    pub fn support_extent(&self) -> Option<Vec<f64>> {
        let (_, r) = self.center.as_ref()?;
        let am = DMatrix::from_row_slice(self.d, self.d, &self.a);
        let inv = am.try_inverse()?;
        Some((0..self.d).map(|i| r * inv.row(i).norm()).collect())
    }

    fn inner_len(&self, a: usize) -> usize {
        self.axes[a + 1..].iter().map(|x| x.powers.len()).product::<usize>() * self.levels.l2
    }

    pub fn out_len(&self) -> usize {
        self.inner_len(0) * self.axes[0].powers.len()
    }

    fn torus_point(&self, kp: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            out[i] = (0..self.d).map(|j| self.a[i * self.d + j] * kp[j]).sum();
        }
    }

    /// Range of axis `a` over the window support given the fixed leading
    /// coordinates; None when empty.
    fn range(&self, a: usize, fixed: &[f64]) -> Option<(f64, f64)> {
        let (c, r) = match &self.center {
            None => {
                return Some(if self.axes[a].fold && a + 1 < self.d { (0.0, PI) } else { (-PI, PI) });
            }
            Some(x) => x,
        };
        let d = self.d;
        let m = d - a;
        let am = DMatrix::from_row_slice(d, d, &self.a);
        let b = am.columns(a, m).into_owned();
        let mut rhs = DVector::zeros(d);
        for j in 0..a {
            let u = fixed[j] - c[j];
            for i in 0..d {
                rhs[i] -= am[(i, j)] * u;
            }
        }
        let btb = b.transpose() * &b;
        let inv = btb.try_inverse()?;
        let v0 = &inv * (b.transpose() * &rhs);
        let res = (&b * &v0 - &rhs).norm_squared();
        let room = r * r - res;
        if room <= 0.0 {
            return None;
        }
        let half = (room * inv[(0, 0)]).sqrt();
        let mid = c[a] + v0[0];
        Some((mid - half, mid + half))
    }

    fn phase(&self, a: usize, n: i64, x: f64) -> C64 {
        if self.axes[a].fold {
            C64::new((n as f64 * x).cos() / PI, 0.0)
        } else {
            C64::from_polar(1.0 / (2.0 * PI), n as f64 * x)
        }
    }

    fn gk_opts(&self, a: usize) -> GkOptions {
        let nmax = self.axes[a].powers.iter().map(|p| p.abs()).max().unwrap_or(0).max(1);
        GkOptions {
            abs_tol: if a == 0 { self.opts.abs_tol } else { self.opts.abs_tol * 1e-2 },
            rel_tol: if a == 0 { self.opts.rel_tol } else { self.opts.inner_rel_tol },
            max_width: PI / (4.0 * nmax as f64),
            max_evals: self.opts.level_max_evals,
        }
    }

    fn budget_left(&self) -> bool {
        self.evals.load(Ordering::Relaxed) < self.opts.max_evals
    }

    pub fn run(&self) -> NestedResult {
        let mut out = vec![ZERO; self.out_len()];
        let mut fixed = vec![0.0; self.d];
        let top_err = self.level(0, &self.levels.base.clone(), &mut fixed, &mut out);
        // Propagate inner maxima through the outer measures.
        let mut err = top_err;
        let mut scale = 1.0;
        for a in 0..self.d - 1 {
            let len = match self.range(a, &vec![0.0; self.d]) {
                Some((lo, hi)) if self.center.is_none() => hi - lo,
                _ => 2.0 * PI,
            };
            scale *= len * if self.axes[a].fold { 1.0 / PI } else { 1.0 / (2.0 * PI) };
            err += scale * f64::from_bits(self.level_err[a + 1].load(Ordering::Relaxed));
        }
        NestedResult {
            values: out,
            error: err,
            evals: self.evals.load(Ordering::Relaxed),
            converged: !self.unconverged.load(Ordering::Relaxed) && self.budget_left(),
        }
    }

    /// Integral over axes a..d with leading coordinates fixed; returns the
    /// error estimate of this level.
    fn level(&self, a: usize, coefs: &[C64], fixed: &mut [f64], out: &mut [C64]) -> f64 {
        if a + 1 == self.d {
            return self.innermost(coefs, fixed, out);
        }
        let (lo, hi) = match self.range(a, fixed) {
            Some(r) => r,
            None => {
                out.iter_mut().for_each(|x| *x = ZERO);
                return 0.0;
            }
        };
        let inner_len = self.inner_len(a);
        let np = self.axes[a].powers.len();
        let m = np * inner_len;
        let eval = |x: f64, o: &mut [C64], fx: &mut Vec<f64>, next: &mut Vec<C64>, inner: &mut Vec<C64>| {
            self.levels.apply(a, coefs, x, next);
            fx[a] = x;
            inner.clear();
            inner.resize(inner_len, ZERO);
            let e = self.level(a + 1, next, fx, inner);
            fetch_max(&self.level_err[a + 1], e);
            for (p, &n) in self.axes[a].powers.iter().enumerate() {
                let ph = self.phase(a, n, x);
                for (dst, &v) in o[p * inner_len..(p + 1) * inner_len].iter_mut().zip(inner.iter()) {
                    *dst = ph * v;
                }
            }
        };
        let opts = self.gk_opts(a);
        let res = if a == 0 && self.opts.parallel {
            let base: Vec<f64> = fixed.to_vec();
            gk_adaptive_par(
                |x, o| {
                    let mut fx = base.clone();
                    let mut next = Vec::new();
                    let mut inner = Vec::new();
                    eval(x, o, &mut fx, &mut next, &mut inner);
                },
                &[lo, hi],
                m,
                &opts,
            )
        } else {
            let mut fx = fixed.to_vec();
            let mut next = Vec::new();
            let mut inner = Vec::new();
            gk_adaptive(|x, o| eval(x, o, &mut fx, &mut next, &mut inner), &[lo, hi], m, &opts)
        };
        if !res.converged {
            self.unconverged.store(true, Ordering::Relaxed);
        }
        out.copy_from_slice(&res.value);
        res.error
    }

    fn innermost(&self, coefs: &[C64], fixed: &mut [f64], out: &mut [C64]) -> f64 {
        let a = self.d - 1;
        let l2 = self.levels.l2;
        let slices: Vec<&[C64]> = coefs.chunks(l2).collect();
        let line = LaurentLine::new(self.l, &self.levels.line_powers, &slices);
        if !self.budget_left() {
            out.iter_mut().for_each(|x| *x = ZERO);
            self.unconverged.store(true, Ordering::Relaxed);
            return 0.0;
        }
        if self.window.is_torus() {
            self.evals.fetch_add(1, Ordering::Relaxed);
            if line_integrals(&line, self.z, &self.axes[a].powers, out) {
                return 0.0;
            }
        }
        let (lo, hi) = match self.range(a, fixed) {
            Some(r) => r,
            None => {
                out.iter_mut().for_each(|x| *x = ZERO);
                return 0.0;
            }
        };
        let l = self.l;
        let mut buf = vec![ZERO; l2];
        let mut ev = Vec::with_capacity(l);
        // Breakpoints where a band crosses Re z.
        let mut points = vec![lo];
        let samples = 48;
        let band_at = |k: f64, buf: &mut Vec<C64>, ev: &mut Vec<f64>| {
            line.shifted_at(C64::from_polar(1.0, k), ZERO, buf);
            fiber_eigenvalues(buf, l, ev);
        };
        let mut prev: Vec<f64> = {
            band_at(lo, &mut buf, &mut ev);
            ev.iter().map(|e| e - self.z.re).collect()
        };
        for s in 1..=samples {
            let x1 = lo + (hi - lo) * s as f64 / samples as f64;
            band_at(x1, &mut buf, &mut ev);
            let cur: Vec<f64> = ev.iter().map(|e| e - self.z.re).collect();
            let x0 = lo + (hi - lo) * (s - 1) as f64 / samples as f64;
            for b in 0..l {
                if prev[b] * cur[b] < 0.0 {
                    let (mut p, mut q) = (x0, x1);
                    let sp = prev[b].signum();
                    for _ in 0..40 {
                        let mid = 0.5 * (p + q);
                        band_at(mid, &mut buf, &mut ev);
                        if (ev[b] - self.z.re).signum() == sp {
                            p = mid;
                        } else {
                            q = mid;
                        }
                        if q - p < 1e-3 * self.z.im.abs() {
                            break;
                        }
                    }
                    points.push(0.5 * (p + q));
                }
            }
            prev = cur;
        }
        points.push(hi);
        points.sort_by(f64::total_cmp);
        let powers = &self.axes[a].powers;
        let mut kp = fixed.to_vec();
        let mut kk = vec![0.0; self.d];
        let mut inv = vec![ZERO; l2];
        let res = gk_adaptive(
            |x, o| {
                kp[a] = x;
                self.torus_point(&kp, &mut kk);
                let rho = self.window.eval(&kk);
                if rho == 0.0 {
                    o.iter_mut().for_each(|v| *v = ZERO);
                    return;
                }
                line.shifted_at(C64::from_polar(1.0, x), ZERO, &mut buf);
                fiber_resolvent(&buf, l, self.z, &mut inv);
                for (p, &n) in powers.iter().enumerate() {
                    let ph = C64::from_polar(rho / (2.0 * PI), n as f64 * x);
                    for (dst, &v) in o[p * l2..(p + 1) * l2].iter_mut().zip(&inv) {
                        *dst = ph * v;
                    }
                }
            },
            &points,
            powers.len() * l2,
            &self.gk_opts(a),
        );
        self.evals.fetch_add(res.evals, Ordering::Relaxed);
        if !res.converged {
            self.unconverged.store(true, Ordering::Relaxed);
        }
        out.copy_from_slice(&res.value);
        res.error
    }
}
