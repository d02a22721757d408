//! Lattice Hamiltonians given by finite hopping tables and their Bloch symbols.

use std::collections::BTreeMap;

use crate::error::{LapError, Result};
use crate::linalg::{CMat, C64, ZERO};

pub type Offset = Vec<i64>;

/// Raw hopping description as read from a file or built in code.
#[derive(Clone, Debug)]
pub struct HoppingSpec {
    pub name: String,
    pub dimension: usize,
    pub fiber_size: usize,
    pub hops: Vec<(Offset, CMat)>,
}

/// Validated periodic Hamiltonian on Z^d with L x L matrix fibers.
///
/// Hopping matrices are stored row-major so that the quadrature loops can
/// accumulate symbols without touching nalgebra.
#[derive(Clone, Debug)]
pub struct HoppingModel {
    name: String,
    dim: usize,
    l: usize,
    offsets: Vec<Offset>,
    mats: Vec<Vec<C64>>,
}

#[derive(Clone, Debug)]
pub struct SymbolValue {
    pub k: Vec<f64>,
    pub value: CMat,
    pub gradient: Vec<CMat>,
    pub hessian: Vec<Vec<CMat>>,
}

const SYM_TOL: f64 = 1e-12;

pub fn build_model(spec: &HoppingSpec) -> Result<HoppingModel> {
    let d = spec.dimension;
    let l = spec.fiber_size;
    if d == 0 || l == 0 {
        return Err(LapError::DimensionMismatch("dimension and fiber_size must be positive".into()));
    }
    let mut table: BTreeMap<Offset, CMat> = BTreeMap::new();
    for (m, h) in &spec.hops {
        if m.len() != d {
            return Err(LapError::DimensionMismatch(format!(
                "offset {m:?} has {} components, expected {d}",
                m.len()
            )));
        }
        if h.nrows() != l || h.ncols() != l {
            return Err(LapError::DimensionMismatch(format!(
                "matrix for offset {m:?} is {}x{}, expected {l}x{l}",
                h.nrows(),
                h.ncols()
            )));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LapError::NonFiniteEntry(m.clone()));
        }
        if table.insert(m.clone(), h.clone()).is_some() {
            return Err(LapError::DuplicateOffset(m.clone()));
        }
    }
    let scale = table.values().flat_map(|h| h.iter().map(|z| z.norm())).fold(1.0, f64::max);
    for (m, h) in &table {
        let neg: Offset = m.iter().map(|x| -x).collect();
        let partner = table.get(&neg).ok_or_else(|| LapError::MissingConjugatePartner(m.clone()))?;
        let defect = (partner - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > SYM_TOL * scale {
            return Err(LapError::MissingConjugatePartner(m.clone()));
        }
    }
    let mut offsets = Vec::with_capacity(table.len());
    let mut mats = Vec::with_capacity(table.len());
    for (m, h) in table {
        if h.iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        mats.push(crate::linalg::to_row_major(&h));
        offsets.push(m);
    }
    Ok(HoppingModel { name: spec.name.clone(), dim: d, l, offsets, mats })
}

impl HoppingModel {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn fiber_size(&self) -> usize {
        self.l
    }
    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }
    pub fn hop(&self, i: usize) -> CMat {
        CMat::from_row_slice(self.l, self.l, &self.mats[i])
    }
    pub fn hop_row_major(&self, i: usize) -> &[C64] {
        &self.mats[i]
    }

    pub fn to_spec(&self) -> HoppingSpec {
        HoppingSpec {
            name: self.name.clone(),
            dimension: self.dim,
            fiber_size: self.l,
            hops: (0..self.offsets.len()).map(|i| (self.offsets[i].clone(), self.hop(i))).collect(),
        }
    }

    /// Largest |m_j| over the stored offsets.
    pub fn range(&self) -> i64 {
        self.offsets.iter().flat_map(|m| m.iter().map(|x| x.abs())).max().unwrap_or(0)
    }

    /// Sum of hopping norms, an upper bound for ||E(k)||.
    pub fn norm_bound(&self) -> f64 {
        (0..self.offsets.len()).map(|i| crate::linalg::spectral_norm(&self.hop(i))).sum()
    }

    /// E(k) written row-major into `out` (length L^2).
    pub fn symbol_into(&self, k: &[f64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for (m, h) in self.offsets.iter().zip(&self.mats) {
            let ph: f64 = m.iter().zip(k).map(|(&mj, &kj)| mj as f64 * kj).sum();
            let e = C64::from_polar(1.0, ph);
            for (o, &hv) in out.iter_mut().zip(h) {
                *o += e * hv;
            }
        }
    }

    pub fn symbol(&self, k: &[f64]) -> CMat {
        let mut buf = vec![ZERO; self.l * self.l];
        self.symbol_into(k, &mut buf);
        CMat::from_row_slice(self.l, self.l, &buf)
    }

    /// Model with offsets mapped by the integer matrix `v` (m -> v m).
    ///
    /// For unimodular `v` the symbols satisfy E'(k') = E(v^T k').
    pub fn transformed(&self, v: &[Vec<i64>]) -> HoppingModel {
        let offsets = self
            .offsets
            .iter()
            .map(|m| v.iter().map(|row| row.iter().zip(m).map(|(a, b)| a * b).sum()).collect())
            .collect();
        HoppingModel { name: self.name.clone(), dim: self.dim, l: self.l, offsets, mats: self.mats.clone() }
    }

    /// True when H_{R m} = H_m for the reflection R flipping `axis`, so that
    /// E(k) is even in k_axis.
    pub fn reflection_symmetric(&self, axis: usize) -> bool {
        let lookup: BTreeMap<&Offset, usize> = self.offsets.iter().enumerate().map(|(i, m)| (m, i)).collect();
        self.offsets.iter().enumerate().all(|(i, m)| {
            let mut r = m.clone();
            r[axis] = -r[axis];
            match lookup.get(&r) {
                Some(&j) => self.mats[i].iter().zip(&self.mats[j]).all(|(a, b)| (a - b).norm() <= SYM_TOL),
                None => false,
            }
        })
    }

    /// Symbol with its leading coordinates still free; see [`PartialSymbol`].
    pub fn partial(&self) -> PartialSymbol {
        PartialSymbol {
            free: self.dim,
            l: self.l,
            terms: self.offsets.iter().cloned().zip(self.mats.iter().cloned()).collect(),
        }
    }
}

/// Bloch symbol with some leading momenta fixed: Σ_m c_m e^{i<k_rest, m>}.
#[derive(Clone, Debug)]
pub struct PartialSymbol {
    free: usize,
    l: usize,
    terms: Vec<(Offset, Vec<C64>)>,
}

impl PartialSymbol {
    pub fn free_dims(&self) -> usize {
        self.free
    }

    /// Fix the first free coordinate at `k0`, merging equal remaining offsets.
    pub fn fix_first(&self, k0: f64) -> PartialSymbol {
        let mut merged: BTreeMap<Offset, Vec<C64>> = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = C64::from_polar(1.0, m[0] as f64 * k0);
            let entry = merged.entry(m[1..].to_vec()).or_insert_with(|| vec![ZERO; self.l * self.l]);
            for (o, &v) in entry.iter_mut().zip(c) {
                *o += e * v;
            }
        }
        PartialSymbol { free: self.free - 1, l: self.l, terms: merged.into_iter().collect() }
    }

    /// Restriction to the last free axis; requires exactly one free axis.
    pub fn line(&self) -> LineSymbol {
        assert_eq!(self.free, 1, "line() needs exactly one free coordinate");
        LineSymbol {
            l: self.l,
            powers: self.terms.iter().map(|(m, _)| m[0]).collect(),
            coeffs: self.terms.iter().map(|(_, c)| c.clone()).collect(),
        }
    }
}

/// E(k) = Σ_p A_p e^{i p k} along one axis.
#[derive(Clone, Debug)]
pub struct LineSymbol {
    pub l: usize,
    pub powers: Vec<i64>,
    pub coeffs: Vec<Vec<C64>>,
}

impl LineSymbol {
    pub fn eval_into(&self, k: f64, out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for (&p, c) in self.powers.iter().zip(&self.coeffs) {
            let e = C64::from_polar(1.0, p as f64 * k);
            for (o, &v) in out.iter_mut().zip(c) {
                *o += e * v;
            }
        }
    }

    /// dE/dk along the line.
    pub fn deriv_into(&self, k: f64, out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for (&p, c) in self.powers.iter().zip(&self.coeffs) {
            let e = C64::new(0.0, p as f64) * C64::from_polar(1.0, p as f64 * k);
            for (o, &v) in out.iter_mut().zip(c) {
                *o += e * v;
            }
        }
    }

    pub fn degree(&self) -> i64 {
        self.powers.iter().map(|p| p.abs()).max().unwrap_or(0)
    }
}

/// E(k) and exact derivatives up to `order` (0, 1 or 2).
pub fn eval_symbol(model: &HoppingModel, k: &[f64], order: usize) -> SymbolValue {
    let d = model.dim;
    let l = model.l;
    let mut value = CMat::zeros(l, l);
    let mut gradient = if order >= 1 { vec![CMat::zeros(l, l); d] } else { Vec::new() };
    let mut hessian = if order >= 2 { vec![vec![CMat::zeros(l, l); d]; d] } else { Vec::new() };
    for i in 0..model.offsets.len() {
        let m = &model.offsets[i];
        let h = model.hop(i);
        let ph: f64 = m.iter().zip(k).map(|(&mj, &kj)| mj as f64 * kj).sum();
        let term = h * C64::from_polar(1.0, ph);
        if order >= 1 {
            for a in 0..d {
                gradient[a] += &term * C64::new(0.0, m[a] as f64);
                if order >= 2 {
                    for b in 0..d {
                        hessian[a][b] -= &term * C64::new((m[a] * m[b]) as f64, 0.0);
                    }
                }
            }
        }
        value += term;
    }
    SymbolValue { k: k.to_vec(), value, gradient, hessian }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_values() {
        let m = reference::laplacian(3);
        assert!((eval_symbol(&m, &[0.0; 3], 0).value[(0, 0)].re - 6.0).abs() < 1e-14);
        assert!((eval_symbol(&m, &[PI; 3], 0).value[(0, 0)].re + 6.0).abs() < 1e-14);
    }

    #[test]
    fn weyl_toy_sigma1() {
        let m = reference::weyl_toy(0.0);
        let e = eval_symbol(&m, &[PI / 2.0, 0.0, 0.0], 0).value;
        let s1 = &crate::linalg::pauli()[0];
        assert!(crate::linalg::max_abs(&(e - s1)) < 1e-14);
    }

    #[test]
    fn missing_partner_rejected() {
        let spec = HoppingSpec {
            name: "bad".into(),
            dimension: 1,
            fiber_size: 1,
            hops: vec![(vec![1], CMat::from_element(1, 1, C64::new(1.0, 0.0)))],
        };
        assert_eq!(build_model(&spec).unwrap_err().name(), "MissingConjugatePartner");
    }

    #[test]
    fn partial_restriction_matches_full() {
        let m = reference::weyl_toy(0.5);
        let k = [0.3, -1.1, 2.0];
        let line = m.partial().fix_first(k[0]).fix_first(k[1]).line();
        let mut a = vec![ZERO; 4];
        let mut b = vec![ZERO; 4];
        line.eval_into(k[2], &mut a);
        m.symbol_into(&k, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn transformed_symbol() {
        let m = reference::weyl_toy(0.5);
        let v = vec![vec![0, 0, 1], vec![1, -1, 0], vec![0, 1, -1]];
        let t = m.transformed(&v);
        let kp = [0.4, 0.7, -0.2];
        let k: Vec<f64> = (0..3).map(|j| (0..3).map(|i| v[i][j] as f64 * kp[i]).sum()).collect();
        let a = t.symbol(&kp);
        let b = m.symbol(&k);
        assert!(crate::linalg::max_abs(&(a - b)) < 1e-13);
    }

    #[test]
    fn reflection_detection() {
        assert!(reference::laplacian(3).reflection_symmetric(0));
        assert!(!reference::weyl_toy(0.0).reflection_symmetric(0));
    }
}
