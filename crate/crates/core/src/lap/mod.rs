//! Limiting absorption checks: truncated damped resolvents
//! <X>^{-α} R^z_ρ <X>^{-α}, their ε-limits and Hölder continuity in E,
//! Green-function decay fits, the weighted convolution bound and the
//! band decomposition of the resolvent.

pub mod convolution;
pub mod decomposition;
pub mod toeplitz;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

pub use convolution::{convolution_bound_check, convolution_growth, ConvolutionBound};
pub use decomposition::{decomposition_check, DecompositionOptions, DecompositionReport, MNorm};
pub use toeplitz::{box_sites, NormEstimate, ToeplitzOp};

use crate::error::{LapError, Result};
use crate::green::extrapolate::{fit_line, EpsSchedule};
use crate::green::{extrapolate_ray, green_table, GreenOptions, GreenTable, Window};
use crate::linalg::C64;
use crate::model::HoppingModel;
use crate::torus::bracket;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LapOptions {
    pub green: GreenOptions,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub seed: u64,
}

impl Default for LapOptions {
    fn default() -> Self {
        LapOptions { green: GreenOptions::default(), power_tol: 1e-8, power_max_iter: 20_000, seed: 17 }
    }
}

/// Green tables on the offset box |δ|_∞ <= 2N, keyed by z. Filled on demand,
/// read concurrently.
#[derive(Debug)]
pub struct GreenCache {
    pub model: HoppingModel,
    pub window: Window,
    pub box_radius: usize,
    pub opts: LapOptions,
    tables: Mutex<HashMap<(u64, u64), Arc<GreenTable>>>,
}

impl GreenCache {
    pub fn new(model: &HoppingModel, box_radius: usize, window: &Window, opts: &LapOptions) -> Result<Self> {
        if model.dim() == 3 && box_radius > 20 {
            return Err(LapError::ParameterOutOfRange(format!("box radius {box_radius} exceeds 20 in d = 3")));
        }
        if let Window::Bump(b) = window {
            if b.dim() != model.dim() {
                return Err(LapError::DimensionMismatch("window and model dimensions differ".into()));
            }
        }
        Ok(GreenCache { model: model.clone(), window: window.clone(), box_radius, opts: *opts, tables: Mutex::new(HashMap::new()) })
    }

    pub fn table(&self, z: C64) -> Result<Arc<GreenTable>> {
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(t) = self.tables.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let t = green_table(&self.model, z, 2 * self.box_radius, &self.window, &self.opts.green)?;
        if !t.converged {
            return Err(LapError::BudgetExceeded { cap: self.opts.green.max_evals, error: t.quad_error });
        }
        let t = Arc::new(t);
        self.tables.lock().unwrap().insert(key, t.clone());
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.tables.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Truncated <X>^{-α} R^z_ρ <X>^{-α} on |n|_∞ <= N.
#[derive(Clone, Debug)]
pub struct DampedResolvent {
    pub alpha: f64,
    pub box_radius: usize,
    pub z: C64,
    pub window: String,
    pub op: ToeplitzOp,
    /// Largest entrywise quadrature error of the Green samples.
    pub quad_error: f64,
    /// Operator-norm bound on the effect of `quad_error` (Frobenius).
    pub error_bound: f64,
}

pub fn weights(dim: usize, radius: usize, alpha: f64) -> Vec<f64> {
    box_sites(dim, radius).iter().map(|n| bracket(n).powf(-alpha)).collect()
}

impl DampedResolvent {
    pub fn from_table(table: &GreenTable, alpha: f64, radius: usize, window: &Window) -> Result<Self> {
        if table.nmax < 2 * radius {
            return Err(LapError::ParameterOutOfRange("Green table too small for the box".into()));
        }
        let d = table.dim;
        let l = table.fiber_size;
        let w = weights(d, radius, alpha);
        let op = ToeplitzOp::new(d, radius, l, l, w.clone(), w.clone(), |delta| table.get(delta).unwrap().to_vec());
        let w2: f64 = w.iter().map(|x| x * x).sum();
        Ok(DampedResolvent {
            alpha,
            box_radius: radius,
            z: table.z,
            window: window.label(),
            op,
            quad_error: table.quad_error,
            error_bound: table.quad_error * w2 * l as f64,
        })
    }

    pub fn norm(&self, o: &LapOptions) -> NormEstimate {
        self.op.norm(o.power_tol, o.power_max_iter, o.seed)
    }

    /// Linear combination Σ c_j R_j (same α, box, window).
    pub fn combine(parts: &[&DampedResolvent], coeffs: &[f64], z: C64) -> DampedResolvent {
        let ops: Vec<&ToeplitzOp> = parts.iter().map(|p| &p.op).collect();
        let cs: Vec<C64> = coeffs.iter().map(|&c| C64::new(c, 0.0)).collect();
        let scale: f64 = coeffs.iter().map(|c| c.abs()).sum();
        DampedResolvent {
            alpha: parts[0].alpha,
            box_radius: parts[0].box_radius,
            z,
            window: parts[0].window.clone(),
            op: ToeplitzOp::combine(&ops, &cs),
            quad_error: parts.iter().map(|p| p.quad_error).fold(0.0, f64::max) * scale,
            error_bound: parts.iter().map(|p| p.error_bound).fold(0.0, f64::max) * scale,
        }
    }

    pub fn minus(&self, other: &DampedResolvent) -> DampedResolvent {
        DampedResolvent::combine(&[self, other], &[1.0, -1.0], self.z - other.z)
    }

    /// R^{z̄} from <n|R^{z̄}|m> = <m|R^z|n>^†.
    pub fn conjugate_side(&self) -> DampedResolvent {
        DampedResolvent { z: self.z.conj(), op: self.op.adjoint(), ..self.clone() }
    }
}

pub fn build_damped(model: &HoppingModel, alpha: f64, box_radius: usize, z: C64, window: &Window, o: &LapOptions) -> Result<DampedResolvent> {
    let cache = GreenCache::new(model, box_radius, window, o)?;
    build_damped_cached(&cache, alpha, z)
}

pub fn build_damped_cached(cache: &GreenCache, alpha: f64, z: C64) -> Result<DampedResolvent> {
    if !(z.im > 0.0) {
        return Err(LapError::PreconditionViolated("damped resolvents are built at Im z > 0".into()));
    }
    if !(alpha > 0.0) {
        return Err(LapError::ParameterOutOfRange(format!("α = {alpha} must be positive")));
    }
    let t = cache.table(z)?;
    DampedResolvent::from_table(&t, alpha, cache.box_radius, &cache.window)
}

/// Weights of the polynomial through (s_j, ·) evaluated at s = 0.
pub fn neville_weights(s: &[f64]) -> Vec<f64> {
    (0..s.len())
        .map(|j| (0..s.len()).filter(|&i| i != j).map(|i| s[i] / (s[i] - s[j])).product())
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsScan {
    pub energy: f64,
    pub alpha: f64,
    pub box_radius: usize,
    pub eps: Vec<f64>,
    pub norms: Vec<f64>,
    /// ‖R(ε_j) - R(ε_{j+1})‖.
    pub diffs: Vec<f64>,
    pub monotone: bool,
    pub cauchy: bool,
    pub limit_norm: f64,
    pub limit_error: f64,
    pub power_converged: bool,
}

/// Extrapolated boundary value R(E + i0) from the `keep` smallest ε of the
/// schedule (polynomial in √ε), with an operator-norm error estimate.
pub fn boundary_value(cache: &GreenCache, alpha: f64, energy: f64, schedule: &EpsSchedule, keep: usize) -> Result<(DampedResolvent, f64)> {
    let eps = schedule.values();
    let keep = keep.clamp(2, eps.len());
    let tail = &eps[eps.len() - keep..];
    let parts: Vec<DampedResolvent> = tail.iter().map(|&e| build_damped_cached(cache, alpha, C64::new(energy, e))).collect::<Result<_>>()?;
    let refs: Vec<&DampedResolvent> = parts.iter().collect();
    let s: Vec<f64> = tail.iter().map(|e| e.sqrt()).collect();
    let full = DampedResolvent::combine(&refs, &neville_weights(&s), C64::new(energy, 0.0));
    let lower = DampedResolvent::combine(&refs[1..], &neville_weights(&s[1..]), C64::new(energy, 0.0));
    let err = full.minus(&lower).norm(&cache.opts).value;
    Ok((full, err))
}

pub fn epsilon_scan(cache: &GreenCache, alpha: f64, energy: f64, schedule: &EpsSchedule) -> Result<EpsScan> {
    let eps = schedule.values();
    if eps.len() < 3 {
        return Err(LapError::ParameterOutOfRange("ε scan needs at least three values".into()));
    }
    let ops: Vec<DampedResolvent> = eps.iter().map(|&e| build_damped_cached(cache, alpha, C64::new(energy, e))).collect::<Result<_>>()?;
    let o = &cache.opts;
    let est: Vec<NormEstimate> = ops.iter().map(|r| r.norm(o)).collect();
    let dest: Vec<NormEstimate> = ops.windows(2).map(|w| w[0].minus(&w[1]).norm(o)).collect();
    let norms: Vec<f64> = est.iter().map(|e| e.value).collect();
    let diffs: Vec<f64> = dest.iter().map(|e| e.value).collect();
    let monotone = diffs.windows(2).all(|w| w[1] < w[0]);
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let settled = diffs.iter().all(|&d| d <= 1e-12 * scale.max(1e-300));
    let rate = (diffs[diffs.len() - 1] / diffs[0]).powf(1.0 / (diffs.len() - 1) as f64);
    let cauchy = settled || (monotone && rate < 0.97);
    let keep = eps.len().min(5);
    let (limit, limit_error) = boundary_value(cache, alpha, energy, schedule, keep)?;
    Ok(EpsScan {
        energy,
        alpha,
        box_radius: cache.box_radius,
        eps,
        limit_norm: limit.norm(o).value,
        limit_error,
        norms,
        diffs,
        monotone,
        cauchy,
        power_converged: est.iter().chain(&dest).all(|e| e.converged),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderPair {
    pub e1: f64,
    pub e2: f64,
    pub diff: f64,
    pub excluded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderScan {
    pub alpha: f64,
    pub energies: Vec<f64>,
    pub limit_norms: Vec<f64>,
    pub limit_errors: Vec<f64>,
    pub pairs: Vec<HolderPair>,
    pub beta_hat: f64,
    pub fit_residual: f64,
}

/// Upper ends of the Hölder windows: critical values
/// min{2α - (d+2)/2, (d-2)/2, α - 1}, regular values min{α - 1/2, 1}.
pub fn theorem_beta_window(d: usize, alpha: f64, regular: bool) -> f64 {
    if regular {
        (alpha - 0.5).min(1.0)
    } else {
        let d = d as f64;
        (2.0 * alpha - (d + 2.0) / 2.0).min((d - 2.0) / 2.0).min(alpha - 1.0)
    }
}

/// Fit ‖R(E+i0) - R(E'+i0)‖ ~ C|E - E'|^β over all pairs of the grid;
/// pairs whose difference is below twice the combined extrapolation error
/// are excluded.
pub fn hoelder_scan(cache: &GreenCache, alpha: f64, energies: &[f64], schedule: &EpsSchedule) -> Result<HolderScan> {
    let o = &cache.opts;
    let keep = schedule.count.min(5);
    let limits: Vec<(DampedResolvent, f64)> = energies.iter().map(|&e| boundary_value(cache, alpha, e, schedule, keep)).collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for i in 0..energies.len() {
        for j in i + 1..energies.len() {
            let de = (energies[i] - energies[j]).abs();
            let diff = limits[i].0.minus(&limits[j].0).norm(o).value;
            let excluded = de == 0.0 || diff < 2.0 * (limits[i].1 + limits[j].1);
            pairs.push(HolderPair { e1: energies[i], e2: energies[j], diff, excluded });
        }
    }
    let used: Vec<&HolderPair> = pairs.iter().filter(|p| !p.excluded).collect();
    if used.len() < 2 {
        return Err(LapError::FitFailed { residual: f64::INFINITY, limit: 0.25 });
    }
    let x: Vec<f64> = used.iter().map(|p| (p.e1 - p.e2).abs().ln()).collect();
    let y: Vec<f64> = used.iter().map(|p| p.diff.ln()).collect();
    let (beta_hat, _, fit_residual) = fit_line(&x, &y);
    Ok(HolderScan {
        alpha,
        energies: energies.to_vec(),
        limit_norms: limits.iter().map(|l| l.0.norm(o).value).collect(),
        limit_errors: limits.iter().map(|l| l.1).collect(),
        pairs,
        beta_hat,
        fit_residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DecayLaw {
    /// |G| = C <n>^{-p}.
    PurePower,
    /// |G| = C <n>^{-p} log<n>.
    PowerLog,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub ray: Vec<i64>,
    pub samples: Vec<(f64, f64)>,
    pub law: DecayLaw,
    pub p_hat: f64,
    pub c_hat: f64,
    /// Max relative deviation of the samples from the fit.
    pub residual: f64,
}

pub const FIT_RESIDUAL_LIMIT: f64 = 0.25;

/// Least squares in log coordinates; FitFailed beyond the residual limit.
pub fn fit_decay_samples(ray: &[i64], samples: &[(f64, f64)], law: DecayLaw) -> Result<DecayFit> {
    if samples.len() < 3 || samples.iter().any(|s| !(s.1 > 0.0) || !(s.0 > 1.0)) {
        return Err(LapError::ParameterOutOfRange("need three or more positive samples with <n> > 1".into()));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let y: Vec<f64> = samples
        .iter()
        .map(|s| match law {
            DecayLaw::PurePower => s.1.ln(),
            DecayLaw::PowerLog => s.1.ln() - s.0.ln().ln(),
        })
        .collect();
    let (slope, icpt, _) = fit_line(&x, &y);
    let c_hat = icpt.exp();
    let residual = samples
        .iter()
        .map(|&(n, g)| {
            let f = c_hat * n.powf(slope) * if law == DecayLaw::PowerLog { n.ln() } else { 1.0 };
            (g / f - 1.0).abs()
        })
        .fold(0.0, f64::max);
    if residual > FIT_RESIDUAL_LIMIT {
        return Err(LapError::FitFailed { residual, limit: FIT_RESIDUAL_LIMIT });
    }
    Ok(DecayFit { ray: ray.to_vec(), samples: samples.to_vec(), law, p_hat: -slope, c_hat, residual })
}

/// Boundary-value samples (<j v>, ‖G(j v; E+i0)‖) along a ray.
pub fn ray_samples(model: &HoppingModel, energy: f64, ray: &[i64], js: &[i64], window: &Window, schedule: &EpsSchedule, opts: &GreenOptions) -> Result<Vec<(f64, f64)>> {
    let lims = extrapolate_ray(model, ray, js, energy, window, schedule, opts)?;
    Ok(js
        .iter()
        .zip(&lims)
        .map(|(&j, l)| {
            let n: Vec<i64> = ray.iter().map(|x| x * j).collect();
            (bracket(&n), l.value.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn fit_decay(model: &HoppingModel, energy: f64, ray: &[i64], js: &[i64], window: &Window, law: DecayLaw, schedule: &EpsSchedule, opts: &GreenOptions) -> Result<DecayFit> {
    let samples = ray_samples(model, energy, ray, js, window, schedule, opts)?;
    fit_decay_samples(ray, &samples, law)
}

/// sup / median of |G(n)| <n>^{p} (log<n>)^{-q} over the samples.
pub fn bounded_ratio(samples: &[(f64, f64)], p: f64, log_power: f64) -> f64 {
    let mut v: Vec<f64> = samples.iter().map(|&(n, g)| g * n.powf(p) / n.ln().powf(log_power)).collect();
    let sup = v.iter().cloned().fold(0.0, f64::max);
    v.sort_by(|a, b| a.total_cmp(b));
    let med = if v.len() % 2 == 1 { v[v.len() / 2] } else { 0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) };
    sup / med
}
