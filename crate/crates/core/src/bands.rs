//! Fiberwise spectral analysis: eigen-decomposition, Riesz projections,
//! transported frames and band derivatives.

use crate::error::{LapError, Result};
use crate::linalg::{eigh_sorted, loewdin, CMat, C64};
use crate::model::{eval_symbol, HoppingModel};

pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct FiberSpectrum {
    pub k: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
    pub min_gap: f64,
}

impl FiberSpectrum {
    /// Gap between band `l` and its nearest neighbour (infinite for L = 1).
    pub fn gap_at(&self, l: usize) -> f64 {
        let e = &self.eigenvalues;
        let below = if l > 0 { e[l] - e[l - 1] } else { f64::INFINITY };
        let above = if l + 1 < e.len() { e[l + 1] - e[l] } else { f64::INFINITY };
        below.min(above)
    }

    /// Gap separating the bands `block` from the rest of the spectrum.
    pub fn block_gap(&self, block: BandBlock) -> f64 {
        let e = &self.eigenvalues;
        let lo = if block.first > 0 { e[block.first] - e[block.first - 1] } else { f64::INFINITY };
        let last = block.first + block.count - 1;
        let hi = if last + 1 < e.len() { e[last + 1] - e[last] } else { f64::INFINITY };
        lo.min(hi)
    }

    pub fn block_projector(&self, block: BandBlock) -> CMat {
        let v = self.eigenvectors.columns(block.first, block.count);
        &v * v.adjoint()
    }

    pub fn block_vectors(&self, block: BandBlock) -> CMat {
        self.eigenvectors.columns(block.first, block.count).into_owned()
    }
}

pub fn diagonalize_fiber(model: &HoppingModel, k: &[f64]) -> Result<FiberSpectrum> {
    let e = model.symbol(k);
    let (eigenvalues, eigenvectors) = eigh_sorted(&e)?;
    let min_gap = eigenvalues.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Ok(FiberSpectrum { k: k.to_vec(), eigenvalues, eigenvectors, min_gap })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contour {
    pub center: C64,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct RieszBlock {
    pub projector: CMat,
    pub rank: usize,
    pub contour: Contour,
}

/// Spectral projector onto the eigenvalues enclosed by `contour`.
///
/// Evaluated as the residue sum Σ v_l v_l^dagger over enclosed eigenvalues.
pub fn riesz_projection(model: &HoppingModel, k: &[f64], contour: Contour) -> Result<RieszBlock> {
    let spec = diagonalize_fiber(model, k)?;
    let tol = 1e-8;
    let l = model.fiber_size();
    let mut projector = CMat::zeros(l, l);
    let mut rank = 0;
    for (i, &ev) in spec.eigenvalues.iter().enumerate() {
        let dist = (C64::new(ev, 0.0) - contour.center).norm();
        if (dist - contour.radius).abs() <= tol {
            return Err(LapError::ContourTouchesSpectrum { eigenvalue: ev, tol });
        }
        if dist < contour.radius {
            let v = spec.eigenvectors.column(i);
            projector += &v * v.adjoint();
            rank += 1;
        }
    }
    Ok(RieszBlock { projector, rank, contour })
}

/// Contiguous group of bands, by index in the sorted spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandBlock {
    pub first: usize,
    pub count: usize,
}

impl BandBlock {
    pub fn single(l: usize) -> Self {
        BandBlock { first: l, count: 1 }
    }
    pub fn pair(l: usize) -> Self {
        BandBlock { first: l, count: 2 }
    }
}

#[derive(Clone, Debug)]
pub struct LocalFrame {
    pub patch: Vec<Vec<f64>>,
    pub frames: Vec<CMat>,
    pub rank: usize,
}

/// Frame along `path` by parallel transport: each step projects the previous
/// frame and orthonormalizes symmetrically.
pub fn transport_frame(model: &HoppingModel, path: &[Vec<f64>], block: BandBlock) -> Result<LocalFrame> {
    let gap_tol = 1e-6;
    let mut frames: Vec<CMat> = Vec::with_capacity(path.len());
    for (i, k) in path.iter().enumerate() {
        let spec = diagonalize_fiber(model, k)?;
        if spec.block_gap(block) <= gap_tol {
            return Err(LapError::GapClosure(i));
        }
        let f = match frames.last() {
            None => spec.block_vectors(block),
            Some(prev) => {
                let p = spec.block_projector(block);
                loewdin(&(p * prev)).ok_or(LapError::GapClosure(i))?
            }
        };
        frames.push(f);
    }
    Ok(LocalFrame { patch: path.to_vec(), frames, rank: block.count })
}

/// Frame at `k` obtained by projecting a reference frame, as used for
/// frames on a small patch around a fixed centre.
pub fn project_frame(model: &HoppingModel, k: &[f64], block: BandBlock, reference: &CMat) -> Result<CMat> {
    let spec = diagonalize_fiber(model, k)?;
    let p = spec.block_projector(block);
    loewdin(&(p * reference)).ok_or_else(|| LapError::GapClosure(0))
}

/// Gradient and Hessian of the simple band `l` by perturbation theory.
pub fn band_derivatives(model: &HoppingModel, k: &[f64], l: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    band_derivatives_tol(model, k, l, DEGENERACY_TOL)
}

pub fn band_derivatives_tol(model: &HoppingModel, k: &[f64], l: usize, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let spec = diagonalize_fiber(model, k)?;
    let gap = spec.gap_at(l);
    if gap <= tol {
        return Err(LapError::DegenerateBand { band: l, gap });
    }
    let sym = eval_symbol(model, k, 2);
    let d = model.dim();
    let n = model.fiber_size();
    let v = &spec.eigenvectors;
    // Matrix elements <v_a, dE_i v_b>.
    let dmat: Vec<CMat> = sym.gradient.iter().map(|g| v.adjoint() * g * v).collect();
    let grad: Vec<f64> = (0..d).map(|i| dmat[i][(l, l)].re).collect();
    let vl = v.column(l);
    let mut hess = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let mut h = (vl.adjoint() * &sym.hessian[i][j] * vl)[(0, 0)].re;
            for m in 0..n {
                if m != l {
                    let num = dmat[i][(l, m)] * dmat[j][(m, l)];
                    h += 2.0 * num.re / (spec.eigenvalues[l] - spec.eigenvalues[m]);
                }
            }
            hess[i][j] = h;
            hess[j][i] = h;
        }
    }
    Ok((grad, hess))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, pauli};
    use crate::reference;
    use std::f64::consts::PI;

    #[test]
    fn weyl_toy_spectra() {
        let m = reference::weyl_toy(0.0);
        let s = diagonalize_fiber(&m, &[PI / 2.0, 0.0, 0.0]).unwrap();
        assert!((s.eigenvalues[0] + 1.0).abs() < 1e-14 && (s.min_gap - 2.0).abs() < 1e-14);
        let s = diagonalize_fiber(&m, &[0.0; 3]).unwrap();
        assert!(s.min_gap.abs() < 1e-14);
    }

    #[test]
    fn riesz_upper_sigma3() {
        // E(k) = sigma_3 at k = (0, 0, pi/2).
        let m = reference::weyl_toy(0.0);
        let k = [0.0, 0.0, PI / 2.0];
        assert!(max_abs(&(m.symbol(&k) - &pauli()[2])) < 1e-14);
        let b = riesz_projection(&m, &k, Contour { center: C64::new(1.0, 0.0), radius: 0.5 }).unwrap();
        let want = CMat::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        assert_eq!(b.rank, 1);
        assert!(max_abs(&(b.projector - want)) < 1e-12);
        let all = riesz_projection(&m, &k, Contour { center: C64::new(0.0, 0.0), radius: 3.0 }).unwrap();
        assert!(max_abs(&(all.projector - CMat::identity(2, 2))) < 1e-12);
        let bad = riesz_projection(&m, &k, Contour { center: C64::new(0.0, 0.0), radius: 1.0 });
        assert_eq!(bad.unwrap_err().name(), "ContourTouchesSpectrum");
    }

    #[test]
    fn laplacian_hessians() {
        let m = reference::laplacian(3);
        let (g, h) = band_derivatives(&m, &[0.0; 3], 0).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-14));
        assert!((h[0][0] + 2.0).abs() < 1e-14 && h[0][1].abs() < 1e-14);
        let (_, h) = band_derivatives(&m, &[PI, 0.0, 0.0], 0).unwrap();
        assert!((h[0][0] - 2.0).abs() < 1e-14 && (h[1][1] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn frame_through_degeneracy_fails() {
        let m = reference::weyl_toy(0.0);
        let path: Vec<Vec<f64>> = (0..11).map(|i| vec![-0.5 + 0.1 * i as f64, 0.0, 0.0]).collect();
        let e = transport_frame(&m, &path, BandBlock::single(1)).unwrap_err();
        assert_eq!(e, LapError::GapClosure(5));
    }

    #[test]
    fn scalar_frames_are_phases() {
        let m = reference::laplacian(2);
        let path: Vec<Vec<f64>> = (0..5).map(|i| vec![0.1 * i as f64, 0.3]).collect();
        let f = transport_frame(&m, &path, BandBlock::single(0)).unwrap();
        assert!(f.frames.iter().all(|p| (p[(0, 0)].norm() - 1.0).abs() < 1e-14));
    }
}
