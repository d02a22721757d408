//! Level sets Σ^E of a band by marching simplices and the coarea
//! representation of windowed resolvent matrix elements.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;

use super::{green_quadrature_with, GreenOptions, Window};
use crate::bands::diagonalize_fiber;
use crate::critical::find_critical_points;
use crate::error::{LapError, Result};
use crate::linalg::{fiber_eigenvalues, C64, ZERO};
use crate::model::{eval_symbol, HoppingModel};
use crate::quad::gauss_legendre_on;

/// Trigonometric polynomial Σ c_m e^{i<m,k>}.
pub type TrigPoly = Vec<(Vec<i64>, C64)>;

pub fn trig_eval(p: &TrigPoly, k: &[f64]) -> C64 {
    p.iter()
        .map(|(m, c)| c * C64::from_polar(1.0, m.iter().zip(k).map(|(&a, &b)| a as f64 * b).sum::<f64>()))
        .sum()
}

/// Coefficients of conj(φ) ψ.
pub fn conj_product(phi: &TrigPoly, psi: &TrigPoly) -> TrigPoly {
    let mut acc: HashMap<Vec<i64>, C64> = HashMap::new();
    for (p, a) in phi {
        for (q, b) in psi {
            let m: Vec<i64> = q.iter().zip(p).map(|(x, y)| x - y).collect();
            *acc.entry(m).or_insert(ZERO) += a.conj() * b;
        }
    }
    let mut v: TrigPoly = acc.into_iter().filter(|(_, c)| c.norm() > 0.0).collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

/// Gradient of the simple band `l` by first-order perturbation theory.
pub fn band_gradient(model: &HoppingModel, k: &[f64], l: usize) -> Result<Vec<f64>> {
    let sym = eval_symbol(model, k, 1);
    if model.fiber_size() == 1 {
        return Ok(sym.gradient.iter().map(|g| g[(0, 0)].re).collect());
    }
    let spec = diagonalize_fiber(model, k)?;
    let v = spec.eigenvectors.column(l);
    Ok(sym.gradient.iter().map(|g| (v.adjoint() * g * v)[(0, 0)].re).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelSet {
    pub energy: f64,
    pub band: usize,
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub grad_norms: Vec<f64>,
    /// Triangles (d = 3) or segments (d = 2), as vertex indices.
    pub facets: Vec<Vec<usize>>,
    /// Facet area (d = 3) or length (d = 2).
    pub measures: Vec<f64>,
    /// ν(facet)/|∇E|, averaged over the facet vertices.
    pub weights: Vec<f64>,
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// ∫_{Σ^E} g ν/|∇E| with vertex averaging on each facet.
    pub fn integrate<G: Fn(&[f64]) -> C64>(&self, g: G) -> C64 {
        let vals: Vec<C64> = self.vertices.iter().zip(&self.grad_norms).map(|(v, gn)| g(v) / *gn).collect();
        let mut s = ZERO;
        for (f, m) in self.facets.iter().zip(&self.measures) {
            let mean: C64 = f.iter().map(|&i| vals[i]).sum::<C64>() / f.len() as f64;
            s += mean * *m;
        }
        s
    }
}

/// Band values on a regular vertex grid over a box.
#[derive(Clone, Debug)]
pub struct BandGrid {
    pub dim: usize,
    pub band: usize,
    pub lo: Vec<f64>,
    pub h: Vec<f64>,
    pub cells: usize,
    pub values: Vec<f64>,
}

impl BandGrid {
    pub fn new(model: &HoppingModel, band: usize, lo: &[f64], hi: &[f64], cells: usize) -> Self {
        let d = model.dim();
        let l = model.fiber_size();
        let h: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / cells as f64).collect();
        let n = (cells + 1).pow(d as u32);
        let mut values = vec![0.0; n];
        let mut buf = vec![ZERO; l * l];
        let mut ev = Vec::new();
        let mut k = vec![0.0; d];
        for (idx, v) in values.iter_mut().enumerate() {
            let mut r = idx;
            for a in (0..d).rev() {
                k[a] = lo[a] + (r % (cells + 1)) as f64 * h[a];
                r /= cells + 1;
            }
            model.symbol_into(&k, &mut buf);
            fiber_eigenvalues(&buf, l, &mut ev);
            *v = ev[band];
        }
        BandGrid { dim: d, band, lo: lo.to_vec(), h, cells, values }
    }

    fn point(&self, idx: usize) -> Vec<f64> {
        let mut k = vec![0.0; self.dim];
        let mut r = idx;
        for a in (0..self.dim).rev() {
            k[a] = self.lo[a] + (r % (self.cells + 1)) as f64 * self.h[a];
            r /= self.cells + 1;
        }
        k
    }

    pub fn range(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }
}

fn band_value(model: &HoppingModel, k: &[f64], band: usize, buf: &mut [C64], ev: &mut Vec<f64>) -> f64 {
    model.symbol_into(k, buf);
    fiber_eigenvalues(buf, model.fiber_size(), ev);
    ev[band]
}

/// Simplices of the unit cell: Kuhn triangulation (6 tetrahedra or 2
/// triangles), as corner bitmasks.
fn kuhn_simplices(d: usize) -> Vec<Vec<usize>> {
    let perms: Vec<Vec<usize>> = if d == 2 { vec![vec![0, 1], vec![1, 0]] } else {
        vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]]
    };
    perms
        .into_iter()
        .map(|p| {
            let mut corners = vec![0usize];
            let mut c = 0usize;
            for a in p {
                c |= 1 << a;
                corners.push(c);
            }
            corners
        })
        .collect()
}

fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
    let v: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
    let x = u[1] * v[2] - u[2] * v[1];
    let y = u[2] * v[0] - u[0] * v[2];
    let z = u[0] * v[1] - u[1] * v[0];
    0.5 * (x * x + y * y + z * z).sqrt()
}

/// Extract Σ^E from a grid, polishing each vertex onto the level set along
/// its grid edge.
pub fn extract(model: &HoppingModel, grid: &BandGrid, energy: f64, window: &Window) -> Result<LevelSet> {
    let d = grid.dim;
    if d != 2 && d != 3 {
        return Err(LapError::DimensionMismatch("level sets are implemented for d = 2 and d = 3".into()));
    }
    let l = model.fiber_size();
    let band = grid.band;
    let n1 = grid.cells + 1;
    let strides: Vec<usize> = (0..d).map(|a| n1.pow((d - 1 - a) as u32)).collect();
    let simplices = kuhn_simplices(d);
    let mut vert_of_edge: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let mut grad_norms: Vec<f64> = Vec::new();
    let mut facets = Vec::new();
    let mut measures = Vec::new();
    let mut buf = vec![ZERO; l * l];
    let mut ev = Vec::new();
    let f = |i: usize| grid.values[i] - energy;
    let total_cells = grid.cells.pow(d as u32);
    for cell in 0..total_cells {
        let mut base = 0;
        let mut r = cell;
        for a in (0..d).rev() {
            base += (r % grid.cells) * strides[a];
            r /= grid.cells;
        }
        let corner = |mask: usize| -> usize { base + (0..d).filter(|a| mask & (1 << a) != 0).map(|a| strides[a]).sum::<usize>() };
        // Quick reject.
        let cvals: Vec<f64> = (0..1usize << d).map(|m| f(corner(m))).collect();
        if cvals.iter().all(|&v| v > 0.0) || cvals.iter().all(|&v| v <= 0.0) {
            continue;
        }
        for simp in &simplices {
            let ids: Vec<usize> = simp.iter().map(|&m| corner(m)).collect();
            let pos: Vec<usize> = ids.iter().cloned().filter(|&i| f(i) > 0.0).collect();
            let neg: Vec<usize> = ids.iter().cloned().filter(|&i| f(i) <= 0.0).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let mut edge_vertex = |a: usize, b: usize| -> Result<usize> {
                let key = if a < b { (a, b) } else { (b, a) };
                if let Some(&v) = vert_of_edge.get(&key) {
                    return Ok(v);
                }
                let (pa, pb) = (grid.point(key.0), grid.point(key.1));
                let (mut t0, mut t1) = (0.0, 1.0);
                let (mut g0, mut g1) = (f(key.0), f(key.1));
                let at = |t: f64| -> Vec<f64> { pa.iter().zip(&pb).map(|(x, y)| x + t * (y - x)).collect() };
                let mut t = g0 / (g0 - g1);
                let mut side = 0i32;
                for _ in 0..100 {
                    let g = band_value(model, &at(t), band, &mut buf, &mut ev) - energy;
                    if g.abs() <= 1e-12 || (t1 - t0) < 1e-15 {
                        break;
                    }
                    // Illinois variant of regula falsi.
                    if (g > 0.0) == (g0 > 0.0) {
                        t0 = t;
                        g0 = g;
                        if side == -1 {
                            g1 *= 0.5;
                        }
                        side = -1;
                    } else {
                        t1 = t;
                        g1 = g;
                        if side == 1 {
                            g0 *= 0.5;
                        }
                        side = 1;
                    }
                    t = (t0 * g1 - t1 * g0) / (g1 - g0);
                }
                let k = at(t);
                let defect = (band_value(model, &k, band, &mut buf, &mut ev) - energy).abs();
                if defect > 1e-8 {
                    return Err(LapError::NewtonFailure(format!("level-set vertex defect {defect:e}")));
                }
                let gn = band_gradient(model, &k, band)?.iter().map(|x| x * x).sum::<f64>().sqrt();
                if gn < 1e-6 {
                    return Err(LapError::CriticalPointInWindow { k, grad: gn });
                }
                vertices.push(k);
                grad_norms.push(gn);
                vert_of_edge.insert(key, vertices.len() - 1);
                Ok(vertices.len() - 1)
            };
            let mut polys: Vec<Vec<usize>> = Vec::new();
            if d == 2 {
                let (lone, others) = if pos.len() == 1 { (pos[0], &neg) } else { (neg[0], &pos) };
                polys.push(vec![edge_vertex(lone, others[0])?, edge_vertex(lone, others[1])?]);
            } else if pos.len() == 1 || neg.len() == 1 {
                let (lone, others) = if pos.len() == 1 { (pos[0], &neg) } else { (neg[0], &pos) };
                polys.push(vec![edge_vertex(lone, others[0])?, edge_vertex(lone, others[1])?, edge_vertex(lone, others[2])?]);
            } else {
                let a = edge_vertex(pos[0], neg[0])?;
                let b = edge_vertex(pos[0], neg[1])?;
                let c = edge_vertex(pos[1], neg[1])?;
                let e = edge_vertex(pos[1], neg[0])?;
                polys.push(vec![a, b, c]);
                polys.push(vec![a, c, e]);
            }
            for p in polys {
                if p.iter().all(|&i| window.eval(&vertices[i]) == 0.0) && !window.is_torus() {
                    continue;
                }
                let m = if d == 2 {
                    let (a, b) = (&vertices[p[0]], &vertices[p[1]]);
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                } else {
                    triangle_area(&vertices[p[0]], &vertices[p[1]], &vertices[p[2]])
                };
                facets.push(p);
                measures.push(m);
            }
        }
    }
    let weights = facets
        .iter()
        .zip(&measures)
        .map(|(f, m): (&Vec<usize>, &f64)| m * f.iter().map(|&i| 1.0 / grad_norms[i]).sum::<f64>() / f.len() as f64)
        .collect();
    Ok(LevelSet { energy, band, dim: d, vertices, grad_norms, facets, measures, weights })
}

/// Bounding box of the window support.
pub fn window_box(window: &Window, d: usize) -> (Vec<f64>, Vec<f64>) {
    match window {
        Window::Bump(b) => (b.center.iter().map(|c| c - b.r2).collect(), b.center.iter().map(|c| c + b.r2).collect()),
        _ => (vec![-PI; d], vec![PI; d]),
    }
}

/// Σ^E of band `l` inside the window, on a grid with `cells` cells per axis.
pub fn level_set(model: &HoppingModel, band: usize, energy: f64, window: &Window, cells: usize) -> Result<LevelSet> {
    if band >= model.fiber_size() {
        return Err(LapError::DimensionMismatch(format!("band {band} out of range")));
    }
    let (lo, hi) = window_box(window, model.dim());
    let grid = BandGrid::new(model, band, &lo, &hi, cells);
    extract(model, &grid, energy, window)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoareaOptions {
    pub cells: usize,
    /// Combine grids with `cells` and `2 cells` by Richardson extrapolation.
    pub richardson: bool,
    pub e_panels: usize,
    pub e_nodes: usize,
}

impl Default for CoareaOptions {
    fn default() -> Self {
        CoareaOptions { cells: 40, richardson: true, e_panels: 6, e_nodes: 10 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoareaResult {
    pub coarea: C64,
    pub direct: C64,
    pub direct_error: f64,
    pub rel_defect: f64,
}

/// e ↦ ∫_{Σ^e} conj(φ)ψρ ν/|∇E|, integrated against (e - z)^{-1} on one grid.
fn coarea_on_grid(model: &HoppingModel, grid: &BandGrid, g: &dyn Fn(&[f64]) -> C64, window: &Window, z: C64, o: &CoareaOptions) -> Result<C64> {
    let (emin, emax) = grid.range();
    let pad = 1e-9 * (emax - emin).max(1.0);
    let (a, b) = (emin + pad, emax - pad);
    let slice = |e: f64| -> Result<C64> { Ok(extract(model, grid, e, window)?.integrate(g)) };
    let width = (b - a) / o.e_panels as f64;
    let real_axis = z.im == 0.0 && z.re > a && z.re < b;
    let s_at_z = if real_axis { slice(z.re)? } else { ZERO };
    let mut total = ZERO;
    for p in 0..o.e_panels {
        let (x, w) = gauss_legendre_on(o.e_nodes, a + p as f64 * width, a + (p + 1) as f64 * width);
        for (e, we) in x.iter().zip(&w) {
            let s = slice(*e)?;
            total += if real_axis { (s - s_at_z) / (e - z.re) * *we } else { s / (C64::new(*e, 0.0) - z) * *we };
        }
    }
    if real_axis {
        // Plemelj: PV part of the subtracted constant plus iπ S(E).
        total += s_at_z * (C64::new(((b - z.re) / (z.re - a)).ln(), 0.0) + C64::new(0.0, PI));
    }
    Ok(total)
}

/// (2π)^{-d} ∫ conj(φ)ψ ρ tr (E - z)^{-1} dk two ways: through level sets
/// and the coarea formula, and through direct Brillouin-zone quadrature.
pub fn coarea_reconstruct(
    model: &HoppingModel,
    phi: &TrigPoly,
    psi: &TrigPoly,
    window: &Window,
    z: C64,
    o: &CoareaOptions,
    gopts: &GreenOptions,
) -> Result<CoareaResult> {
    let d = model.dim();
    if z.im < 0.0 {
        return Err(LapError::PreconditionViolated("use Im z >= 0".into()));
    }
    for band in 0..model.fiber_size() {
        let crit = find_critical_points(model, band, 8)?;
        if let Some(p) = crit.points.iter().find(|p| window.eval(&p.k_star) > 0.0) {
            return Err(LapError::CriticalPointInWindow { k: p.k_star.clone(), grad: p.grad_norm });
        }
    }
    let prod = conj_product(phi, psi);
    let g = |k: &[f64]| trig_eval(&prod, k) * window.eval(k);
    let (lo, hi) = window_box(window, d);
    let mut coarea = ZERO;
    for band in 0..model.fiber_size() {
        let coarse = coarea_on_grid(model, &BandGrid::new(model, band, &lo, &hi, o.cells), &g, window, z, o)?;
        coarea += if o.richardson {
            let fine = coarea_on_grid(model, &BandGrid::new(model, band, &lo, &hi, 2 * o.cells), &g, window, z, o)?;
            (fine * 4.0 - coarse) / 3.0
        } else {
            coarse
        };
    }
    coarea /= (2.0 * PI).powi(d as i32);
    let mut direct = ZERO;
    let mut direct_error = 0.0;
    if z.im > 0.0 {
        let zero = vec![0; d];
        for (m, c) in &prod {
            let s = green_quadrature_with(model, m, &zero, z, window, gopts)?;
            let tr: C64 = (0..model.fiber_size()).map(|i| s.value[i * model.fiber_size() + i]).sum();
            direct += c * tr;
            direct_error += c.norm() * s.quad_error;
        }
    } else {
        let sched = super::EpsSchedule { eps0: 1e-2, ratio: 0.5, count: 8 };
        let zero = vec![0; d];
        for (m, c) in &prod {
            let lim = super::extrapolate_to_axis(model, m, &zero, z.re, window, &sched, gopts)?;
            let tr: C64 = (0..model.fiber_size()).map(|i| lim.value[i * model.fiber_size() + i]).sum();
            direct += c * tr;
            direct_error += c.norm() * lim.error_estimate;
        }
    }
    let rel_defect = (coarea - direct).norm() / direct.norm().max(1e-300);
    Ok(CoareaResult { coarea, direct, direct_error, rel_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::BumpFunction;
    use crate::reference;

    #[test]
    fn small_sphere_near_band_top() {
        let m = reference::laplacian(3);
        let w = Window::Bump(BumpFunction::new(&[0.0; 3], 0.55, 0.6).unwrap());
        let ls = level_set(&m, 0, 5.9, &w, 40).unwrap();
        let want = 2.0 * PI * 0.1f64.sqrt();
        assert!((ls.total_weight() - want).abs() / want < 0.05, "{} vs {want}", ls.total_weight());
        for v in &ls.vertices {
            assert!((eval_symbol(&m, v, 0).value[(0, 0)].re - 5.9).abs() <= 1e-8);
        }
    }

    #[test]
    fn empty_outside_band() {
        let m = reference::laplacian(2);
        assert!(level_set(&m, 0, 7.0, &Window::Torus, 16).unwrap().is_empty());
    }

    #[test]
    fn two_dimensional_weight_grows_near_van_hove() {
        let m = reference::laplacian(2);
        let outer = Window::Bump(BumpFunction::new(&[PI / 2.0, 0.0], 0.3, 1.2).unwrap());
        let ls = level_set(&m, 0, 0.0, &outer, 64).unwrap();
        assert!(ls.total_weight() > 0.0);
        let near = Window::Bump(BumpFunction::new(&[PI / 2.0, PI / 2.0], 0.3, 1.4).unwrap());
        assert!(level_set(&m, 0, 0.0, &near, 64).unwrap().total_weight() > 0.0);
    }
}
