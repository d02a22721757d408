//! Critical points of individual bands and their Morse classification.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::bands::{band_derivatives_tol, diagonalize_fiber};
use crate::error::Result;
use crate::model::HoppingModel;
use crate::torus::{seed_grid, torus_distance, wrap, wrap_point};

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub k_star: Vec<f64>,
    pub band: usize,
    pub energy: f64,
    pub hessian: Vec<Vec<f64>>,
    pub hessian_eigenvalues: Vec<f64>,
    pub signature: i32,
    pub definite: bool,
    pub min_abs_eigen: f64,
    pub grad_norm: f64,
}

impl CriticalPoint {
    /// Number of negative Hessian eigenvalues.
    pub fn morse_index(&self) -> usize {
        self.hessian_eigenvalues.iter().filter(|&&x| x < 0.0).count()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CriticalOptions {
    pub grid_res: usize,
    pub gap_mask: f64,
    pub dedup_tol: f64,
    pub nondegeneracy_tol: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub step_clamp: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            grid_res: 8,
            gap_mask: 1e-4,
            dedup_tol: 1e-6,
            nondegeneracy_tol: 1e-6,
            grad_tol: 1e-9,
            max_iter: 400,
            step_clamp: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SearchDiagnostics {
    pub seeds: usize,
    pub converged: usize,
    pub masked: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    pub diagnostics: SearchDiagnostics,
}

enum SeedOutcome {
    Converged(Vec<f64>),
    Masked,
    Failed,
}

fn sym_eigenvalues(h: &[Vec<f64>]) -> Vec<f64> {
    let d = h.len();
    let m = DMatrix::from_fn(d, d, |i, j| h[i][j]);
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Damped Newton on grad E_l = 0 with a clamped step.
fn newton_from(model: &HoppingModel, band: usize, seed: &[f64], o: &CriticalOptions) -> SeedOutcome {
    let d = model.dim();
    let mut k = seed.to_vec();
    let mut lambda = 1e-8;
    let eval = |k: &[f64]| band_derivatives_tol(model, k, band, o.gap_mask);
    let (mut g, mut h) = match eval(&k) {
        Ok(v) => v,
        Err(_) => return SeedOutcome::Masked,
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..o.max_iter {
        let gn = norm(&g);
        let hm = DMatrix::from_fn(d, d, |i, j| h[i][j]);
        let gv = DVector::from_column_slice(&g);
        // Levenberg-Marquardt step on the gradient system.
        let a = &hm * &hm + DMatrix::identity(d, d) * lambda;
        let rhs = &hm * &gv;
        let step = match a.cholesky() {
            Some(c) => -c.solve(&rhs),
            None => -gv.clone(),
        };
        let mut s: Vec<f64> = step.iter().cloned().collect();
        let sn = norm(&s);
        if sn > o.step_clamp {
            s.iter_mut().for_each(|x| *x *= o.step_clamp / sn);
        }
        let trial: Vec<f64> = k.iter().zip(&s).map(|(a, b)| wrap(a + b)).collect();
        match eval(&trial) {
            Ok((g2, h2)) if norm(&g2) < gn || sn < 1e-13 => {
                k = trial;
                g = g2;
                h = h2;
                lambda = (lambda * 0.3).max(1e-14);
                if sn.min(o.step_clamp) < 1e-14 {
                    break;
                }
            }
            Ok(_) => {
                lambda = lambda * 10.0 + 1e-10;
                if lambda > 1e6 {
                    break;
                }
            }
            Err(_) => return SeedOutcome::Masked,
        }
        if norm(&g) < 1e-14 {
            break;
        }
    }
    if norm(&g) <= o.grad_tol {
        SeedOutcome::Converged(wrap_point(&k))
    } else {
        SeedOutcome::Failed
    }
}

pub fn classify(model: &HoppingModel, band: usize, k: &[f64], o: &CriticalOptions) -> Result<CriticalPoint> {
    let (g, h) = band_derivatives_tol(model, k, band, o.gap_mask)?;
    let ev = sym_eigenvalues(&h);
    let pos = ev.iter().filter(|&&x| x > 0.0).count() as i32;
    let neg = ev.iter().filter(|&&x| x < 0.0).count() as i32;
    let d = model.dim() as i32;
    let signature = pos - neg;
    let min_abs_eigen = ev.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let energy = diagonalize_fiber(model, k)?.eigenvalues[band];
    Ok(CriticalPoint {
        k_star: k.to_vec(),
        band,
        energy,
        hessian: h,
        hessian_eigenvalues: ev,
        definite: signature.abs() == d,
        signature,
        min_abs_eigen,
        grad_norm: g.iter().map(|x| x * x).sum::<f64>().sqrt(),
    })
}

pub fn find_critical_points(model: &HoppingModel, band: usize, grid_res: usize) -> Result<CriticalSearch> {
    find_critical_points_with(model, band, &CriticalOptions { grid_res, ..Default::default() })
}

pub fn find_critical_points_with(model: &HoppingModel, band: usize, o: &CriticalOptions) -> Result<CriticalSearch> {
    let seeds = seed_grid(model.dim(), o.grid_res);
    let outcomes: Vec<SeedOutcome> = seeds.par_iter().map(|s| newton_from(model, band, s, o)).collect();
    let mut diag = SearchDiagnostics { seeds: seeds.len(), ..Default::default() };
    let mut found: Vec<Vec<f64>> = Vec::new();
    for out in outcomes {
        match out {
            SeedOutcome::Converged(k) => {
                diag.converged += 1;
                found.push(k);
            }
            SeedOutcome::Masked => diag.masked += 1,
            SeedOutcome::Failed => diag.failed += 1,
        }
    }
    // Snap coordinates at +-pi to a single representative before sorting.
    for k in found.iter_mut() {
        for x in k.iter_mut() {
            if (x.abs() - std::f64::consts::PI).abs() < 1e-12 {
                *x = std::f64::consts::PI;
            }
        }
    }
    found.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|c| c.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for k in found {
        if !unique.iter().any(|u| torus_distance(u, &k) < o.dedup_tol) {
            unique.push(k);
        }
    }
    let points = unique.iter().map(|k| classify(model, band, k, o)).collect::<Result<Vec<_>>>()?;
    Ok(CriticalSearch { points, diagnostics: diag })
}

#[derive(Clone, Debug, Serialize)]
pub struct MorseReport {
    pub checked: usize,
    pub tol: f64,
    /// Indices (into the input list) of points failing the Morse condition.
    pub violators: Vec<usize>,
    pub min_abs_eigen: f64,
}

impl MorseReport {
    pub fn all_morse(&self) -> bool {
        self.violators.is_empty()
    }
}

pub fn check_morse(points: &[CriticalPoint], tol: f64) -> MorseReport {
    MorseReport {
        checked: points.len(),
        tol,
        violators: points.iter().enumerate().filter(|(_, p)| p.min_abs_eigen <= tol).map(|(i, _)| i).collect(),
        min_abs_eigen: points.iter().map(|p| p.min_abs_eigen).fold(f64::INFINITY, f64::min),
    }
}

/// Σ (-1)^{Morse index}; vanishes on the torus for a Morse band.
pub fn euler_sum(points: &[CriticalPoint]) -> i64 {
    points.iter().map(|p| if p.morse_index() % 2 == 0 { 1 } else { -1 }).sum()
}

/// Sampled [min, max] of band `l` on a regular grid.
pub fn band_range(model: &HoppingModel, band: usize, res: usize) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in seed_grid(model.dim(), res) {
        let e = diagonalize_fiber(model, &k)?.eigenvalues[band];
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_3d_has_eight_points() {
        let m = reference::laplacian(3);
        let s = find_critical_points(&m, 0, 8).unwrap();
        assert_eq!(s.points.len(), 8);
        let mut energies: Vec<i64> = s.points.iter().map(|p| p.energy.round() as i64).collect();
        energies.sort();
        energies.dedup();
        assert_eq!(energies, vec![-6, -2, 2, 6]);
        assert!(s.points.iter().all(|p| p.k_star.iter().all(|x| x.abs() < 1e-9 || (x.abs() - PI).abs() < 1e-9)));
        let p = s.points.iter().find(|p| (p.k_star[0] - PI).abs() < 1e-9 && p.k_star[1].abs() < 1e-9 && p.k_star[2].abs() < 1e-9).unwrap();
        assert_eq!(p.signature, -1);
        assert!(!p.definite);
        assert_eq!(euler_sum(&s.points), 0);
        let r = check_morse(&s.points, 1e-6);
        assert!(r.all_morse() && (r.min_abs_eigen - 2.0).abs() < 1e-9);
    }

    #[test]
    fn laplacian_2d_maximum() {
        let m = reference::laplacian(2);
        let s = find_critical_points(&m, 0, 8).unwrap();
        let p = s.points.iter().find(|p| p.k_star.iter().all(|x| x.abs() < 1e-9)).unwrap();
        assert_eq!(p.signature, -2);
        assert!(p.definite && (p.energy - 4.0).abs() < 1e-12);
    }

    #[test]
    fn nonmorse_point_flagged() {
        let m = reference::nonmorse_2d();
        let s = find_critical_points(&m, 0, 8).unwrap();
        let r = check_morse(&s.points, 1e-6);
        assert!(!r.all_morse());
        let bad = &s.points[r.violators[0]];
        assert!(bad.k_star[0].abs() < 1e-3);
    }

    #[test]
    fn empty_report() {
        assert!(check_morse(&[], 1e-6).all_morse());
    }
}
