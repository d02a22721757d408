//! Boundary values G(E + i0) from a geometric ε schedule.

use serde::Serialize;

use super::{green_quadrature_with, green_ray, GreenOptions, Window};
use crate::error::{LapError, Result};
use crate::linalg::{C64, ZERO};
use crate::model::HoppingModel;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub count: usize,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule { eps0: 1e-1, ratio: 0.5, count: 11 }
    }
}

impl EpsSchedule {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.eps0 * self.ratio.powi(j as i32)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AxisLimit {
    pub value: Vec<C64>,
    pub error_estimate: f64,
    pub beta_hat: f64,
    pub fit_residual: f64,
    pub eps: Vec<f64>,
    pub samples: Vec<Vec<C64>>,
}

/// Polynomial interpolation through (s_i, y_i) evaluated at s = 0.
pub fn neville_at_zero(s: &[f64], y: &[C64]) -> C64 {
    let n = s.len();
    let mut p = y.to_vec();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (p[i + 1] * s[i] - p[i] * s[i + m]) / (s[i] - s[i + m]);
        }
    }
    p[0]
}

/// Least-squares line through (x, y); returns (slope, intercept, max |residual|).
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let res = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).abs()).fold(0.0, f64::max);
    (slope, icpt, res)
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Extrapolate samples G(ε_j) (ε decreasing) to ε = 0 by Neville in √ε
/// over the `keep` smallest ε, and fit |G(ε_j) - G(ε_{j+1})| ~ ε_j^β.
pub fn extrapolate_values(eps: &[f64], values: &[Vec<C64>], keep: usize) -> Result<AxisLimit> {
    let n = eps.len();
    if n < 3 || values.len() != n {
        return Err(LapError::ParameterOutOfRange("need at least three ε values".into()));
    }
    let comps = values[0].len();
    let keep = keep.clamp(2, n);
    let s: Vec<f64> = eps.iter().map(|e| e.sqrt()).collect();
    let tail = n - keep;
    let mut value = vec![ZERO; comps];
    let mut lower = vec![ZERO; comps];
    for c in 0..comps {
        let y: Vec<C64> = values.iter().map(|v| v[c]).collect();
        value[c] = neville_at_zero(&s[tail..], &y[tail..]);
        lower[c] = neville_at_zero(&s[tail + 1..], &y[tail + 1..]);
    }
    let mag = values[n - 1].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diffs: Vec<f64> = (0..n - 1).map(|j| max_diff(&values[j], &values[j + 1])).collect();
    let floor = 1e-11 * mag.max(1e-300);
    // The exponent is read off the small-ε end of the schedule.
    let usable: Vec<usize> = (0..n - 1).filter(|&j| diffs[j] > floor).collect();
    let usable = &usable[usable.len().saturating_sub(keep)..];
    let (beta_hat, fit_residual) = if usable.len() >= 2 {
        let x: Vec<f64> = usable.iter().map(|&j| eps[j].ln()).collect();
        let y: Vec<f64> = usable.iter().map(|&j| diffs[j].ln()).collect();
        let (b, _, r) = fit_line(&x, &y);
        (b, r)
    } else {
        (1.0, 0.0)
    };
    // Successive differences must shrink over the tail of the schedule.
    let last = &diffs[diffs.len().saturating_sub(4)..];
    if last.len() >= 2 && last.iter().all(|&d| d > floor) {
        let ratio = (last[last.len() - 1] / last[0]).powf(1.0 / (last.len() - 1) as f64);
        if ratio >= 0.97 {
            return Err(LapError::NonCauchy(format!(
                "differences {:?} shrink by a factor {ratio:.3} per step",
                last.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>()
            )));
        }
    }
    Ok(AxisLimit {
        error_estimate: max_diff(&value, &lower),
        value,
        beta_hat,
        fit_residual,
        eps: eps.to_vec(),
        samples: values.to_vec(),
    })
}

/// G(n - m; E + i0) from green_quadrature along E + iε_j.
pub fn extrapolate_to_axis(
    model: &HoppingModel,
    n: &[i64],
    m: &[i64],
    energy: f64,
    window: &Window,
    schedule: &EpsSchedule,
    opts: &GreenOptions,
) -> Result<AxisLimit> {
    let eps = schedule.values();
    let mut values = Vec::with_capacity(eps.len());
    for &e in &eps {
        let s = green_quadrature_with(model, n, m, C64::new(energy, e), window, opts)?;
        if !s.converged {
            return Err(LapError::BudgetExceeded { cap: opts.max_evals, error: s.quad_error });
        }
        values.push(s.value);
    }
    extrapolate_values(&eps, &values, 5)
}

/// Boundary values G(j v; E + i0) for every j in `js`, one batched
/// quadrature per ε.
pub fn extrapolate_ray(
    model: &HoppingModel,
    v: &[i64],
    js: &[i64],
    energy: f64,
    window: &Window,
    schedule: &EpsSchedule,
    opts: &GreenOptions,
) -> Result<Vec<AxisLimit>> {
    let eps = schedule.values();
    let mut per_eps = Vec::with_capacity(eps.len());
    for &e in &eps {
        let samples = green_ray(model, v, js, C64::new(energy, e), window, opts)?;
        if samples.iter().any(|s| !s.converged) {
            return Err(LapError::BudgetExceeded { cap: opts.max_evals, error: samples[0].quad_error });
        }
        per_eps.push(samples);
    }
    (0..js.len())
        .map(|i| {
            let values: Vec<Vec<C64>> = per_eps.iter().map(|s| s[i].value.clone()).collect();
            extrapolate_values(&eps, &values, 5)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neville_recovers_polynomial() {
        let s = [0.3, 0.2, 0.1, 0.05];
        let y: Vec<C64> = s.iter().map(|x| C64::new(1.0 + 2.0 * x - x * x * x, x * x)).collect();
        assert!((neville_at_zero(&s, &y) - C64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn sqrt_law_gives_half_exponent() {
        let eps: Vec<f64> = (0..8).map(|j| 0.1 * 0.5f64.powi(j)).collect();
        let vals: Vec<Vec<C64>> = eps.iter().map(|e| vec![C64::new(2.0 + 0.3 * e.sqrt() + 0.05 * e, 0.0)]).collect();
        let r = extrapolate_values(&eps, &vals, 5).unwrap();
        assert!((r.value[0].re - 2.0).abs() < 1e-6);
        assert!((r.beta_hat - 0.5).abs() < 0.1);
        let logs: Vec<Vec<C64>> = eps.iter().map(|e| vec![C64::new(e.ln(), 0.0)]).collect();
        assert_eq!(extrapolate_values(&eps, &logs, 5).unwrap_err().name(), "NonCauchy");
    }
}
