use std::sync::Arc;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lapkit_core::bands::diagonalize_fiber;
use lapkit_core::critical::{find_critical_points_with, CriticalOptions};
use lapkit_core::green::{extrapolate_to_axis, green_quadrature_with, BumpFunction, EpsSchedule, GreenOptions, Window};
use lapkit_core::lap::{epsilon_scan, hoelder_scan, GreenCache, LapOptions};
use lapkit_core::model_file::parse_model;
use lapkit_core::oscillatory::{eval_i, CubicPhase, OscOptions, PhaseProblem};
use lapkit_core::weyl::{check_hypotheses, find_weyl_points_with, WeylOptions};
use lapkit_core::{reference, HoppingModel, LapError, C64};

use crate::config::Common;

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Some(false) when a checked hypothesis or verdict failed.
    pub verdict: Option<bool>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), verdict: None }
    }
}

pub enum Failure {
    Usage(String),
    Compute(LapError),
}

impl From<LapError> for Failure {
    fn from(e: LapError) -> Self {
        Failure::Compute(e)
    }
}

pub type Outcome = Result<Table, Failure>;

pub trait Command: Serialize + DeserializeOwned + Default + Clone {
    const NAME: &'static str;
    fn common(&self) -> &Common;
    fn common_mut(&mut self) -> &mut Common;
    /// Fill every unset parameter with its default.
    fn resolve(&mut self);
    fn run(&self) -> Outcome;
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn f(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn load_model(spec: &str) -> Result<HoppingModel, Failure> {
    if let Some(m) = reference::by_name(spec) {
        return Ok(m);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| usage(format!("`{spec}` is neither a reference model nor a readable file: {e}")))?;
    Ok(parse_model(&text)?)
}

/// `torus` or `bump:<c1>,...,<cd>:<r1>:<r2>`.
pub fn parse_window(s: &str, dim: usize) -> Result<Window, Failure> {
    if s == "torus" {
        return Ok(Window::Torus);
    }
    let bad = || usage(format!("window `{s}` must be `torus` or `bump:<c1>,...,<cd>:<r1>:<r2>`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 || parts[0] != "bump" {
        return Err(bad());
    }
    let center: Vec<f64> = parts[1].split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    if center.len() != dim {
        return Err(usage(format!("window center has {} coordinates, model dimension is {dim}", center.len())));
    }
    let r1: f64 = parts[2].parse().map_err(|_| bad())?;
    let r2: f64 = parts[3].parse().map_err(|_| bad())?;
    Ok(Window::Bump(BumpFunction::new(&center, r1, r2)?))
}

fn schedule(v: &[f64]) -> Result<EpsSchedule, Failure> {
    match v {
        [eps0, ratio, count] if *count >= 1.0 && count.fract() == 0.0 => Ok(EpsSchedule { eps0: *eps0, ratio: *ratio, count: *count as usize }),
        _ => Err(usage("--eps-schedule takes EPS0 RATIO COUNT")),
    }
}

fn model_of(m: &Option<String>) -> Result<HoppingModel, Failure> {
    load_model(m.as_deref().ok_or_else(|| usage("--model is required"))?)
}

macro_rules! common_impl {
    () => {
        fn common(&self) -> &Common {
            &self.common
        }
        fn common_mut(&mut self) -> &mut Common {
            &mut self.common
        }
    };
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct BandsArgs {
    /// Reference model name or model file path.
    #[arg(long)]
    pub model: Option<String>,
    /// Points per axis of the uniform k grid.
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

impl Command for BandsArgs {
    const NAME: &'static str = "bands";
    common_impl!();
    fn resolve(&mut self) {
        self.grid.get_or_insert(16);
    }
    fn run(&self) -> Outcome {
        let m = model_of(&self.model)?;
        let (d, l, g) = (m.dim(), m.fiber_size(), self.grid.unwrap_or(16));
        if g == 0 {
            return Err(usage("--grid must be positive"));
        }
        let mut head: Vec<String> = (1..=d).map(|i| format!("k{i}")).collect();
        head.extend((1..=l).map(|i| format!("E{i}")));
        head.push("gap".into());
        let mut t = Table { header: head, rows: Vec::new(), verdict: None };
        for idx in 0..g.pow(d as u32) {
            let mut r = idx;
            let mut k = vec![0.0; d];
            for a in (0..d).rev() {
                k[a] = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (r % g) as f64 / g as f64;
                r /= g;
            }
            let s = diagonalize_fiber(&m, &k)?;
            let mut row: Vec<String> = k.iter().map(|&x| f(x)).collect();
            row.extend(s.eigenvalues.iter().map(|&e| f(e)));
            row.push(f(s.min_gap));
            t.rows.push(row);
        }
        Ok(t)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct CriticalArgs {
    #[arg(long)]
    pub model: Option<String>,
    /// Band index (all bands when absent).
    #[arg(long)]
    pub band: Option<usize>,
    /// Seed grid points per axis.
    #[arg(long)]
    pub grid_res: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

impl Command for CriticalArgs {
    const NAME: &'static str = "critical";
    common_impl!();
    fn resolve(&mut self) {
        self.grid_res.get_or_insert(8);
    }
    fn run(&self) -> Outcome {
        let m = model_of(&self.model)?;
        let d = m.dim();
        let o = CriticalOptions { grid_res: self.grid_res.unwrap_or(8), ..Default::default() };
        let bands: Vec<usize> = match self.band {
            Some(b) if b >= m.fiber_size() => return Err(usage(format!("band {b} out of range"))),
            Some(b) => vec![b],
            None => (0..m.fiber_size()).collect(),
        };
        let mut head: Vec<&str> = vec!["band"];
        let ks: Vec<String> = (1..=d).map(|i| format!("k{i}")).collect();
        head.extend(ks.iter().map(|s| s.as_str()));
        head.extend(["energy", "signature", "min_abs_eigen"]);
        let mut t = Table::new(&head);
        for b in bands {
            for p in find_critical_points_with(&m, b, &o)?.points {
                let mut row = vec![b.to_string()];
                row.extend(p.k_star.iter().map(|&x| f(x)));
                row.extend([f(p.energy), p.signature.to_string(), f(p.min_abs_eigen)]);
                t.rows.push(row);
            }
        }
        Ok(t)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct WeylArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub grid_res: Option<usize>,
    /// Radius of the working ball around each point.
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

impl WeylArgs {
    fn options(&self) -> WeylOptions {
        let d = WeylOptions::default();
        WeylOptions { grid_res: self.grid_res.unwrap_or(d.grid_res), tau: self.tau.unwrap_or(d.tau), ..d }
    }
}

impl Command for WeylArgs {
    const NAME: &'static str = "weyl";
    common_impl!();
    fn resolve(&mut self) {
        let d = WeylOptions::default();
        self.grid_res.get_or_insert(d.grid_res);
        self.tau.get_or_insert(d.tau);
    }
    fn run(&self) -> Outcome {
        let m = model_of(&self.model)?;
        let mut t = Table::new(&["k1", "k2", "k3", "energy", "band_lo", "band_hi", "det_h_jac", "kappa", "type_one", "gamma", "gap"]);
        for p in find_weyl_points_with(&m, &self.options())? {
            let mut row: Vec<String> = p.k_w.iter().map(|&x| f(x)).collect();
            row.extend([
                f(p.energy),
                p.pair.0.to_string(),
                p.pair.1.to_string(),
                f(p.det_h_jac),
                f(p.tilt_kappa),
                p.type_one.to_string(),
                f(p.gamma),
                f(p.gap),
            ]);
            t.rows.push(row);
        }
        Ok(t)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct GreenArgs {
    #[arg(long)]
    pub model: Option<String>,
    /// Site n.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub n: Option<Vec<i64>>,
    /// Site m (origin when absent).
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub m: Option<Vec<i64>>,
    /// Re z and Im z; Im z = 0 takes the limit from above.
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["RE", "IM"])]
    pub z: Option<Vec<f64>>,
    /// `torus` or `bump:<c1>,...,<cd>:<r1>:<r2>`.
    #[arg(long)]
    pub window: Option<String>,
    /// ε values for Im z = 0: EPS0 RATIO COUNT.
    #[arg(long, num_args = 3, value_names = ["EPS0", "RATIO", "COUNT"])]
    pub eps_schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

impl Command for GreenArgs {
    const NAME: &'static str = "green";
    common_impl!();
    fn resolve(&mut self) {
        let g = GreenOptions::default();
        let s = EpsSchedule::default();
        if let Some(n) = &self.n {
            let zero = vec![0; n.len()];
            self.m.get_or_insert(zero);
        }
        self.window.get_or_insert_with(|| "torus".into());
        self.eps_schedule.get_or_insert(vec![s.eps0, s.ratio, s.count as f64]);
        self.rel_tol.get_or_insert(g.rel_tol);
        self.abs_tol.get_or_insert(g.abs_tol);
    }
    fn run(&self) -> Outcome {
        let model = model_of(&self.model)?;
        let d = model.dim();
        let n = self.n.clone().ok_or_else(|| usage("--n is required"))?;
        let m = self.m.clone().unwrap_or_else(|| vec![0; d]);
        if n.len() != d || m.len() != d {
            return Err(usage(format!("--n and --m need {d} coordinates")));
        }
        let z = match self.z.as_deref() {
            Some([re, im]) => C64::new(*re, *im),
            _ => return Err(usage("--z RE IM is required")),
        };
        let window = parse_window(self.window.as_deref().unwrap_or("torus"), d)?;
        let opts = GreenOptions {
            rel_tol: self.rel_tol.unwrap_or(GreenOptions::default().rel_tol),
            abs_tol: self.abs_tol.unwrap_or(GreenOptions::default().abs_tol),
            ..Default::default()
        };
        let (value, err) = if z.im == 0.0 {
            let sched = schedule(self.eps_schedule.as_deref().unwrap_or(&[0.1, 0.5, 11.0]))?;
            let lim = extrapolate_to_axis(&model, &n, &m, z.re, &window, &sched, &opts)?;
            (lim.value, lim.error_estimate)
        } else {
            let s = green_quadrature_with(&model, &n, &m, z, &window, &opts)?;
            if !s.converged {
                return Err(Failure::Compute(LapError::BudgetExceeded { cap: opts.max_evals, error: s.quad_error }));
            }
            (s.value, s.quad_error)
        };
        let l = model.fiber_size();
        let mut t = Table::new(&["row", "col", "re", "im", "quad_error"]);
        for i in 0..l {
            for j in 0..l {
                let v = value[i * l + j];
                t.rows.push(vec![i.to_string(), j.to_string(), f(v.re), f(v.im), f(err)]);
            }
        }
        Ok(t)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct OscArgs {
    /// `definite` or `indefinite` quadratic part.
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Cubic coefficients c_j of f(x) = ½<x, Hx> + Σ c_j x_j³.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub cubic: Option<Vec<f64>>,
    /// Inner radius of the cutoff.
    #[arg(long)]
    pub r1: Option<f64>,
    /// Outer radius of the cutoff.
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["RE", "IM"])]
    pub z: Option<Vec<f64>>,
    #[arg(long, num_args = 1..)]
    pub t: Option<Vec<f64>>,
    /// Unit direction ω.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub omega: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

impl Command for OscArgs {
    const NAME: &'static str = "osc-bench";
    common_impl!();
    fn resolve(&mut self) {
        let d = *self.dim.get_or_insert(3);
        self.phase.get_or_insert_with(|| "definite".into());
        self.cubic.get_or_insert(vec![0.0; d]);
        self.r1.get_or_insert(0.2);
        self.r2.get_or_insert(0.45);
        self.z.get_or_insert(vec![0.05, 0.0]);
        self.t.get_or_insert(vec![4.0, 8.0, 16.0, 32.0, 64.0]);
        self.omega.get_or_insert_with(|| (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect());
    }
    fn run(&self) -> Outcome {
        let d = self.dim.unwrap_or(3);
        let base = match self.phase.as_deref().unwrap_or("definite") {
            "definite" => CubicPhase::definite(d),
            "indefinite" => CubicPhase::indefinite(d),
            other => return Err(usage(format!("unknown phase `{other}`; use definite or indefinite"))),
        };
        let cubic = self.cubic.clone().unwrap_or(vec![0.0; d]);
        if cubic.len() != d {
            return Err(usage(format!("--cubic needs {d} coefficients")));
        }
        let p = PhaseProblem::new(Arc::new(base.with_cubic(cubic)), &vec![0.0; d], self.r1.unwrap_or(0.2), self.r2.unwrap_or(0.45))?;
        let z = match self.z.as_deref() {
            Some([re, im]) => C64::new(*re, *im),
            _ => C64::new(0.05, 0.0),
        };
        let omega = self.omega.clone().ok_or_else(|| usage("--omega is required"))?;
        let ts = self.t.clone().ok_or_else(|| usage("--t is required"))?;
        let mut head: Vec<String> = vec!["t".into(), "re_z".into(), "im_z".into()];
        head.extend((1..=d).map(|i| format!("omega{i}")));
        head.extend(["abs_i", "abs_i1", "abs_i2", "abs_m"].map(String::from));
        let mut tab = Table { header: head, rows: Vec::new(), verdict: None };
        let o = OscOptions::default();
        for t in ts {
            let s = eval_i(&p, z, t, &omega, &o)?;
            let mut row = vec![f(t), f(z.re), f(z.im)];
            row.extend(omega.iter().map(|&w| f(w)));
            row.extend([f(s.i_value.norm()), f(s.i1_value.norm()), f(s.i2_value.norm()), f(s.m_value.norm())]);
            tab.rows.push(row);
        }
        Ok(tab)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct LapArgs {
    #[arg(long)]
    pub model: Option<String>,
    /// Weight exponent α.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Box radius N.
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub box_radius: Option<usize>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub energy_grid: Option<Vec<f64>>,
    #[arg(long, num_args = 3, value_names = ["EPS0", "RATIO", "COUNT"])]
    pub eps_schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub window: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

impl Command for LapArgs {
    const NAME: &'static str = "lap-scan";
    common_impl!();
    fn resolve(&mut self) {
        self.alpha.get_or_insert(1.6);
        self.box_radius.get_or_insert(4);
        self.energy_grid.get_or_insert(vec![1.0]);
        self.eps_schedule.get_or_insert(vec![0.1, 0.1, 4.0]);
        self.window.get_or_insert_with(|| "torus".into());
    }
    fn run(&self) -> Outcome {
        let model = model_of(&self.model)?;
        let window = parse_window(self.window.as_deref().unwrap_or("torus"), model.dim())?;
        let sched = schedule(self.eps_schedule.as_deref().unwrap_or(&[0.1, 0.1, 4.0]))?;
        let alpha = self.alpha.unwrap_or(1.6);
        let energies = self.energy_grid.clone().unwrap_or(vec![1.0]);
        let cache = GreenCache::new(&model, self.box_radius.unwrap_or(4), &window, &LapOptions::default())?;
        let beta = if energies.len() >= 3 { hoelder_scan(&cache, alpha, &energies, &sched)?.beta_hat } else { f64::NAN };
        let mut t = Table::new(&["energy", "eps", "norm", "diff", "cauchy", "beta_hat"]);
        let mut all = true;
        for &e in &energies {
            let s = epsilon_scan(&cache, alpha, e, &sched)?;
            all &= s.cauchy;
            for (i, (&eps, &norm)) in s.eps.iter().zip(&s.norms).enumerate() {
                let diff = if i == 0 { f64::NAN } else { s.diffs[i - 1] };
                t.rows.push(vec![f(e), f(eps), f(norm), f(diff), s.cauchy.to_string(), f(beta)]);
            }
            t.rows.push(vec![f(e), f(0.0), f(s.limit_norm), f(s.limit_error), s.cauchy.to_string(), f(beta)]);
        }
        t.verdict = Some(all);
        Ok(t)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct HypArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub grid_res: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

impl Command for HypArgs {
    const NAME: &'static str = "check-hypotheses";
    common_impl!();
    fn resolve(&mut self) {
        self.grid_res.get_or_insert(8);
    }
    fn run(&self) -> Outcome {
        let m = model_of(&self.model)?;
        let g = self.grid_res.unwrap_or(8);
        let wo = WeylOptions { grid_res: g, ..Default::default() };
        let co = CriticalOptions { grid_res: g, ..Default::default() };
        let r = check_hypotheses(&m, &wo, &co)?;
        let mut t = Table::new(&["hypothesis", "pass", "detail"]);
        for v in &r.verdicts {
            t.rows.push(vec![v.name.clone(), v.pass.to_string(), v.detail.clone()]);
        }
        t.verdict = Some(r.all_pass());
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_syntax() {
        assert!(matches!(parse_window("torus", 3), Ok(Window::Torus)));
        match parse_window("bump:0.5,0,-1:0.2:0.9", 3) {
            Ok(Window::Bump(b)) => assert_eq!((b.r1, b.r2), (0.2, 0.9)),
            _ => panic!(),
        }
        assert!(matches!(parse_window("bump:0,0:0.2:0.9", 3), Err(Failure::Usage(_))));
        assert!(matches!(parse_window("bump:0,0,0:0.9:0.2", 3), Err(Failure::Compute(_))));
    }

    #[test]
    fn resolve_fills_every_parameter() {
        let mut a = GreenArgs { n: Some(vec![1, 2]), ..Default::default() };
        a.resolve();
        assert_eq!(a.m, Some(vec![0, 0]));
        assert!(a.window.is_some() && a.eps_schedule.is_some() && a.rel_tol.is_some());
    }
}
