//! Band decomposition of R^z: one-band pieces on the regular set, one-band
//! and two-band pieces on balls around the Weyl points, and the weighted
//! symbol operators M that sandwich them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::toeplitz::{box_sites, CubeFft, ToeplitzOp};
use super::LapOptions;
use crate::bands::{diagonalize_fiber, BandBlock};
use crate::error::{LapError, Result};
use crate::green::{green_table, smooth_step, Window};
use crate::linalg::{eigh_sorted, fiber_resolvent, loewdin, CMat, CVec, C64, ZERO};
use crate::model::HoppingModel;
use crate::torus::{bracket, torus_distance};
use crate::weyl::{find_weyl_points, WeylPoint};

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionOptions {
    /// The one-band cutoff vanishes within weyl_r0 of each Weyl point;
    /// (ρ^W_j)^3 is 1 within weyl_r1 of k_j and 0 beyond weyl_r2.
    pub weyl_r0: f64,
    pub weyl_r1: f64,
    pub weyl_r2: f64,
    /// Points per axis of the grid carrying the multipliers.
    pub grid: usize,
    /// Output sites |n|_∞ <= out_radius are compared.
    pub out_radius: usize,
    /// Drop the Weyl sums, leaving an incomplete partition.
    pub omit_weyl: bool,
    pub m_norms: bool,
    pub kernel_grid: usize,
    pub alphas: Vec<f64>,
    /// Boxes N and 2N for the M-operator stability check.
    pub m_box: usize,
    pub m_norm_tol: f64,
    pub lap: LapOptions,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        DecompositionOptions {
            weyl_r0: 0.3,
            weyl_r1: 0.8,
            weyl_r2: 1.55,
            grid: 192,
            out_radius: 3,
            omit_weyl: false,
            m_norms: true,
            kernel_grid: 128,
            alphas: vec![0.5, 1.5, 3.0],
            m_box: 6,
            m_norm_tol: 1e-7,
            lap: LapOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MNorm {
    pub piece: String,
    pub alpha: f64,
    pub norm_small: f64,
    pub norm_large: f64,
    pub rel_change: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub z: C64,
    pub weyl_points: usize,
    pub one_band_pieces: usize,
    pub weyl_pieces: usize,
    /// max |ρ^{1b} + Σ (ρ^W)^3 - 1| and max |Σ_i ρ_i^3 - 1| on supp ρ^{1b}, over the grid.
    pub partition_defect: f64,
    /// Relative l2 defect against R^z ψ from Green-table quadrature.
    pub defect: f64,
    /// Relative l2 defect against (E - z)^{-1} on the same grid.
    pub algebraic_defect: f64,
    pub m_box: (usize, usize),
    pub m_norms: Vec<MNorm>,
    pub m_norms_stable: bool,
}

pub const M_NORM_STABILITY: f64 = 0.05;

/// Compactly supported vector with entries uniform in the unit square.
pub fn random_test_vector(dim: usize, fiber: usize, radius: usize, seed: u64) -> Vec<(Vec<i64>, Vec<C64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    box_sites(dim, radius)
        .into_iter()
        .map(|n| (n, (0..fiber).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()))
        .collect()
}

struct WeylBall {
    center: Vec<f64>,
    pair: usize,
    pair_ref: CMat,
    single_refs: Vec<(usize, CMat)>,
}

struct BandPartition<'a> {
    model: &'a HoppingModel,
    balls: Vec<WeylBall>,
    r0: f64,
    r1: f64,
    r2: f64,
    fiber: usize,
}

struct PointData {
    sym: CMat,
    eig: Vec<f64>,
    vecs: CMat,
    /// ρ_{l,a,c}, index (l * fiber + a) * 2 + c.
    rho: Vec<f64>,
    rho_1b: f64,
    /// (j, ρ^W_j) for the balls containing k.
    weyl: Vec<(usize, f64)>,
}

impl<'a> BandPartition<'a> {
    fn new(model: &'a HoppingModel, points: &[WeylPoint], r0: f64, r1: f64, r2: f64) -> Result<Self> {
        let balls = points
            .iter()
            .map(|w| {
                let spec = diagonalize_fiber(model, &w.k_w)?;
                let pair = w.pair.0;
                let single_refs = (0..model.fiber_size())
                    .filter(|&l| l != pair && l != pair + 1)
                    .map(|l| (l, spec.block_vectors(BandBlock::single(l))))
                    .collect();
                Ok(WeylBall { center: w.k_w.clone(), pair, pair_ref: spec.block_vectors(BandBlock::pair(pair)), single_refs })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BandPartition { model, balls, r0, r1, r2, fiber: model.fiber_size() })
    }

    fn one_band_count(&self) -> usize {
        self.fiber * self.fiber * 2
    }

    fn coord(k1: f64) -> [f64; 2] {
        [0.5 * (1.0 + k1.cos()), 0.5 * (1.0 - k1.cos())]
    }

    /// Cutoff vanishing within r0 of every Weyl point and equal to 1 beyond r1.
    fn chi(&self, dists: &[f64]) -> f64 {
        1.0 - dists.iter().map(|&r| smooth_step((r - self.r0) / (self.r1 - self.r0))).sum::<f64>()
    }

    fn eval(&self, k: &[f64]) -> Result<PointData> {
        let l_sz = self.fiber;
        let sym = self.model.symbol(k);
        let (eig, vecs) = eigh_sorted(&sym)?;
        let dists: Vec<f64> = self.balls.iter().map(|b| torus_distance(&b.center, k)).collect();
        let mut weyl = Vec::new();
        let mut bsum = 0.0;
        for (j, &r) in dists.iter().enumerate() {
            let b = smooth_step((r - self.r1) / (self.r2 - self.r1));
            if b > 0.0 {
                weyl.push((j, b.cbrt()));
                bsum += b;
            }
        }
        let chi = self.chi(&dists);
        let mut rho = vec![0.0; self.one_band_count()];
        if chi > 0.0 {
            let s = Self::coord(k[0]);
            for l in 0..l_sz {
                // Gauge weight |P_l e_a|, so that ρ Φ_{l,a} is proportional to P_l e_a.
                let w: Vec<f64> = (0..l_sz).map(|a| vecs[(a, l)].norm()).collect();
                let mut norm3 = 0.0;
                for wa in &w {
                    for sc in &s {
                        norm3 += (wa * sc).powi(3);
                    }
                }
                let scale = chi / norm3.cbrt();
                for a in 0..l_sz {
                    for c in 0..2 {
                        rho[(l * l_sz + a) * 2 + c] = scale * w[a] * s[c];
                    }
                }
            }
        }
        Ok(PointData { sym, eig, vecs, rho, rho_1b: 1.0 - bsum, weyl })
    }

    /// Φ_{l,a} = P_l e_a / |P_l e_a|.
    fn frame_1b(p: &PointData, l: usize, a: usize) -> CVec {
        let v = p.vecs.column(l);
        let ca = v[a].conj();
        CVec::from_iterator(v.len(), v.iter().map(|x| x * ca / ca.norm()))
    }

    fn frame_weyl(&self, p: &PointData, j: usize) -> Option<CMat> {
        let b = &self.balls[j];
        let v = p.vecs.columns(b.pair, 2);
        loewdin(&(&v * v.adjoint() * &b.pair_ref))
    }

    fn frame_weyl_single(p: &PointData, l: usize, reference: &CMat) -> Option<CMat> {
        let v = p.vecs.columns(l, 1);
        loewdin(&(&v * v.adjoint() * reference))
    }

    /// Σ of the three decomposition sums at k, as an L×L multiplier.
    fn multiplier(&self, p: &PointData, z: C64, omit_weyl: bool) -> Result<CMat> {
        let l_sz = self.fiber;
        let mut out = CMat::zeros(l_sz, l_sz);
        if p.rho_1b > 0.0 {
            for l in 0..l_sz {
                let g = (C64::new(p.eig[l], 0.0) - z).inv();
                for a in 0..l_sz {
                    for c in 0..2 {
                        let r = p.rho[(l * l_sz + a) * 2 + c];
                        if r == 0.0 {
                            continue;
                        }
                        let phi = Self::frame_1b(p, l, a) * C64::new(r, 0.0);
                        out += &phi * (g * p.rho_1b * r) * phi.adjoint();
                    }
                }
            }
        }
        if omit_weyl {
            return Ok(out);
        }
        for &(j, rw) in &p.weyl {
            let b = &self.balls[j];
            for (l, reference) in &b.single_refs {
                let phi = Self::frame_weyl_single(p, *l, reference).ok_or(LapError::GapClosure(j))? * C64::new(rw, 0.0);
                let g = (C64::new(p.eig[*l], 0.0) - z).inv();
                out += &phi * (g * rw) * phi.adjoint();
            }
            let phi = self.frame_weyl(p, j).ok_or(LapError::GapClosure(j))?;
            let ew = phi.adjoint() * &p.sym * &phi;
            let mut m = ew - CMat::identity(2, 2) * z;
            if !m.try_inverse_mut() {
                return Err(LapError::GapClosure(j));
            }
            let phi_r = &phi * C64::new(rw, 0.0);
            out += &phi_r * (m * C64::new(rw, 0.0)) * phi_r.adjoint();
        }
        Ok(out)
    }
}

fn grid_point(dim: usize, side: usize, mut idx: usize) -> Vec<f64> {
    let mut k = vec![0.0; dim];
    for a in (0..dim).rev() {
        k[a] = 2.0 * PI * (idx % side) as f64 / side as f64;
        idx /= side;
    }
    k
}

fn wrap_index(v: &[i64], side: usize) -> usize {
    v.iter().fold(0usize, |acc, &x| acc * side + x.rem_euclid(side as i64) as usize)
}

fn box_index(v: &[i64], radius: usize) -> usize {
    let side = 2 * radius + 1;
    v.iter().fold(0usize, |acc, &x| acc * side + (x + radius as i64) as usize)
}

/// Fourier coefficients (2π)^{-d} ∫ e^{ikδ} f(k) dk for |δ|_∞ <= radius, per component.
fn grid_kernels<F>(dim: usize, side: usize, ncomp: usize, radius: usize, f: F) -> Result<Vec<Vec<C64>>>
where
    F: Fn(&[f64], &mut [C64]) -> Result<()> + Sync,
{
    let fft = CubeFft::new(dim, side);
    let n = fft.len();
    let mut vals = vec![ZERO; n * ncomp];
    vals.par_chunks_mut(ncomp).enumerate().try_for_each(|(i, out)| f(&grid_point(dim, side, i), out))?;
    let sites = box_sites(dim, radius);
    let mut kernels = Vec::with_capacity(ncomp);
    let mut buf = vec![ZERO; n];
    for c in 0..ncomp {
        for i in 0..n {
            buf[i] = vals[i * ncomp + c];
        }
        fft.run(&mut buf, true);
        kernels.push(sites.iter().map(|s| buf[wrap_index(s, side)] / n as f64).collect());
    }
    Ok(kernels)
}

pub fn decomposition_check(model: &HoppingModel, z: C64, psi: &[(Vec<i64>, Vec<C64>)], o: &DecompositionOptions) -> Result<DecompositionReport> {
    if !(z.im > 0.0) {
        return Err(LapError::PreconditionViolated("decomposition is checked at Im z > 0".into()));
    }
    let d = model.dim();
    let l_sz = model.fiber_size();
    if psi.iter().any(|(n, v)| n.len() != d || v.len() != l_sz) {
        return Err(LapError::DimensionMismatch("test vector does not match the model".into()));
    }
    if !(0.0 < o.weyl_r0 && o.weyl_r0 < o.weyl_r1 && o.weyl_r1 < o.weyl_r2) {
        return Err(LapError::ParameterOutOfRange("need 0 < weyl_r0 < weyl_r1 < weyl_r2".into()));
    }
    let points = if l_sz >= 2 && d == 3 { find_weyl_points(model, 8)? } else { Vec::new() };
    let part = BandPartition::new(model, &points, o.weyl_r0, o.weyl_r1, o.weyl_r2)?;
    let t_rad = psi.iter().flat_map(|(n, _)| n.iter().map(|x| x.unsigned_abs() as usize)).max().unwrap_or(0);
    let side = o.grid;
    if side < 2 * (o.out_radius + t_rad) + 2 {
        return Err(LapError::ParameterOutOfRange("grid too coarse for the test vector".into()));
    }
    let fft = CubeFft::new(d, side);
    let n = fft.len();

    let mut psi_hat: Vec<Vec<C64>> = vec![vec![ZERO; n]; l_sz];
    for (m, v) in psi {
        for b in 0..l_sz {
            psi_hat[b][wrap_index(m, side)] += v[b];
        }
    }
    for comp in psi_hat.iter_mut() {
        fft.run(comp, false);
    }

    // Point-major: L entries of Dψ̂, L entries of (E - z)^{-1}ψ̂, two partition defects.
    let stride = 2 * l_sz + 2;
    let mut vals = vec![ZERO; n * stride];
    vals.par_chunks_mut(stride).enumerate().try_for_each(|(i, out)| -> Result<()> {
        let k = grid_point(d, side, i);
        let p = part.eval(&k)?;
        let dm = part.multiplier(&p, z, o.omit_weyl)?;
        let flat: Vec<C64> = crate::linalg::to_row_major(&p.sym);
        let mut res = vec![ZERO; l_sz * l_sz];
        if !fiber_resolvent(&flat, l_sz, z, &mut res) {
            return Err(LapError::PreconditionViolated("z on the spectrum".into()));
        }
        let ph: Vec<C64> = (0..l_sz).map(|b| psi_hat[b][i]).collect();
        for a in 0..l_sz {
            let mut s1 = ZERO;
            let mut s2 = ZERO;
            for b in 0..l_sz {
                s1 += dm[(a, b)] * ph[b];
                s2 += res[a * l_sz + b] * ph[b];
            }
            out[a] = s1;
            out[l_sz + a] = s2;
        }
        let wsum: f64 = p.weyl.iter().map(|w| w.1.powi(3)).sum();
        out[2 * l_sz] = C64::new((p.rho_1b + wsum - 1.0).abs(), 0.0);
        if p.rho_1b > 0.0 {
            for l in 0..l_sz {
                let s: f64 = p.rho[l * l_sz * 2..(l + 1) * l_sz * 2].iter().map(|r| r.powi(3)).sum();
                out[2 * l_sz + 1] = C64::new(out[2 * l_sz + 1].re.max((s - 1.0).abs()), 0.0);
            }
        }
        Ok(())
    })?;
    let partition_defect = vals.chunks(stride).map(|c| c[2 * l_sz].re.max(c[2 * l_sz + 1].re)).fold(0.0, f64::max);

    let out_sites = box_sites(d, o.out_radius);
    let mut dec = vec![vec![ZERO; l_sz]; out_sites.len()];
    let mut grid_direct = vec![vec![ZERO; l_sz]; out_sites.len()];
    let mut buf = vec![ZERO; n];
    for c in 0..2 * l_sz {
        for i in 0..n {
            buf[i] = vals[i * stride + c];
        }
        fft.run(&mut buf, true);
        for (s, site) in out_sites.iter().enumerate() {
            let v = buf[wrap_index(site, side)] / n as f64;
            if c < l_sz {
                dec[s][c] = v;
            } else {
                grid_direct[s][c - l_sz] = v;
            }
        }
    }
    drop(vals);
    drop(buf);

    let table = green_table(model, z, o.out_radius + t_rad, &Window::Torus, &o.lap.green)?;
    if !table.converged {
        return Err(LapError::BudgetExceeded { cap: o.lap.green.max_evals, error: table.quad_error });
    }
    let mut direct = vec![vec![ZERO; l_sz]; out_sites.len()];
    for (s, site) in out_sites.iter().enumerate() {
        for (m, v) in psi {
            let delta: Vec<i64> = site.iter().zip(m).map(|(a, b)| a - b).collect();
            let g = table.get(&delta).expect("offset inside the table");
            for a in 0..l_sz {
                for b in 0..l_sz {
                    direct[s][a] += g[a * l_sz + b] * v[b];
                }
            }
        }
    }
    let rel = |x: &[Vec<C64>], y: &[Vec<C64>]| {
        let num: f64 = x.iter().flatten().zip(y.iter().flatten()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = y.iter().flatten().map(|b| b.norm_sqr()).sum();
        (num / den).sqrt()
    };
    let defect = rel(&dec, &direct);
    let algebraic_defect = rel(&dec, &grid_direct);

    let m_norms = if o.m_norms { m_operator_norms(&part, o)? } else { Vec::new() };
    let m_norms_stable = m_norms.iter().all(|m| m.rel_change.abs() <= M_NORM_STABILITY && m.norm_large.is_finite());
    Ok(DecompositionReport {
        z,
        weyl_points: points.len(),
        one_band_pieces: part.one_band_count(),
        weyl_pieces: if o.omit_weyl { 0 } else { points.len() * (l_sz - 1) },
        partition_defect,
        defect,
        algebraic_defect,
        m_box: (o.m_box, 2 * o.m_box),
        m_norms,
        m_norms_stable,
    })
}

/// ‖<X>^{-α} F^* ρΦ F <X>^{α}‖ on the boxes N and 2N for every piece.
fn m_operator_norms(part: &BandPartition, o: &DecompositionOptions) -> Result<Vec<MNorm>> {
    let d = part.model.dim();
    let l_sz = part.fiber;
    let kr = 4 * o.m_box;
    let mut groups: Vec<(Vec<String>, usize, Vec<Vec<C64>>)> = Vec::new();

    for l in 0..l_sz {
        let kernels = grid_kernels(d, o.kernel_grid, 2 * l_sz * l_sz, kr, |k, out| {
            let p = part.eval(k)?;
            for a in 0..l_sz {
                for c in 0..2 {
                    let r = p.rho[(l * l_sz + a) * 2 + c];
                    let base = (a * 2 + c) * l_sz;
                    if r == 0.0 {
                        out[base..base + l_sz].fill(ZERO);
                        continue;
                    }
                    let phi = BandPartition::frame_1b(&p, l, a);
                    for i in 0..l_sz {
                        out[base + i] = phi[i] * r;
                    }
                }
            }
            Ok(())
        })?;
        let names = (0..l_sz).flat_map(|a| (0..2).map(move |c| format!("1band l={l} a={a} c={c}"))).collect();
        groups.push((names, 1, kernels));
    }
    for (j, ball) in part.balls.iter().enumerate() {
        let ncols = 2 + ball.single_refs.len();
        let kernels = grid_kernels(d, o.kernel_grid, l_sz * ncols, kr, |k, out| {
            out.fill(ZERO);
            if torus_distance(&ball.center, k) >= part.r2 {
                return Ok(());
            }
            let p = part.eval(k)?;
            let rw = match p.weyl.iter().find(|w| w.0 == j) {
                Some(w) => w.1,
                None => return Ok(()),
            };
            let phi = part.frame_weyl(&p, j).ok_or(LapError::GapClosure(j))?;
            for i in 0..l_sz {
                for c in 0..2 {
                    out[i * 2 + c] = phi[(i, c)] * rw;
                }
            }
            for (s, (l, reference)) in ball.single_refs.iter().enumerate() {
                let f = BandPartition::frame_weyl_single(&p, *l, reference).ok_or(LapError::GapClosure(j))?;
                let base = l_sz * 2 + s * l_sz;
                for i in 0..l_sz {
                    out[base + i] = f[(i, 0)] * rw;
                }
            }
            Ok(())
        })?;
        // Split into the two-band frame (L×2) and the single frames (L×1).
        let mut two = Vec::new();
        for i in 0..l_sz {
            for c in 0..2 {
                two.push(kernels[i * 2 + c].clone());
            }
        }
        groups.push((vec![format!("weyl j={j}")], 2, two));
        for (s, (l, _)) in ball.single_refs.iter().enumerate() {
            let base = l_sz * 2 + s * l_sz;
            groups.push((vec![format!("weyl j={j} l={l}")], 1, kernels[base..base + l_sz].to_vec()));
        }
    }

    let mut out = Vec::new();
    for (names, ncols, kernels) in &groups {
        let per_piece = l_sz * ncols;
        for (pi, name) in names.iter().enumerate() {
            let comps = &kernels[pi * per_piece..(pi + 1) * per_piece];
            for &alpha in &o.alphas {
                let norm_at = |radius: usize| {
                    let sites = box_sites(d, radius);
                    let left: Vec<f64> = sites.iter().map(|s| bracket(s).powf(-alpha)).collect();
                    let right: Vec<f64> = sites.iter().map(|s| bracket(s).powf(alpha)).collect();
                    let op = ToeplitzOp::new(d, radius, l_sz, *ncols, left, right, |delta| {
                        let idx = box_index(delta, kr);
                        comps.iter().map(|c| c[idx]).collect()
                    });
                    op.norm(o.m_norm_tol, o.lap.power_max_iter, o.lap.seed).value
                };
                let small = norm_at(o.m_box);
                let large = norm_at(2 * o.m_box);
                out.push(MNorm { piece: name.clone(), alpha, norm_small: small, norm_large: large, rel_change: large / small - 1.0 });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    fn quick() -> DecompositionOptions {
        DecompositionOptions { grid: 96, out_radius: 2, m_norms: false, ..Default::default() }
    }

    #[test]
    fn scalar_model_telescopes() {
        let m = reference::laplacian(2);
        let psi = random_test_vector(2, 1, 2, 3);
        let r = decomposition_check(&m, C64::new(0.7, 0.5), &psi, &quick()).unwrap();
        assert!(r.algebraic_defect < 1e-12, "{r:?}");
        assert!(r.partition_defect < 1e-12);
        assert!(r.defect < 1e-6, "{r:?}");
    }

    #[test]
    fn coordinate_cover_is_positive() {
        for i in 0..400 {
            let s = BandPartition::coord(-PI + i as f64 * 2.0 * PI / 400.0);
            assert!(s[0].powi(3) + s[1].powi(3) > 0.1);
        }
    }
}
