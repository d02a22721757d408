//! Smooth cutoffs on the torus and partitions of unity built from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LapError, Result};
use crate::torus::{torus_delta, torus_distance, wrap_point};

/// Smooth step: 1 for s <= 0, 0 for s >= 1, C^∞ in between.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let g = |t: f64| (-1.0 / t).exp();
    let a = g(1.0 - s);
    a / (a + g(s))
}

/// Radial cutoff equal to 1 on |k - c| <= r1 and 0 on |k - c| >= r2
/// (torus distance).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BumpFunction {
    pub center: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
}

impl BumpFunction {
    pub fn new(center: &[f64], r1: f64, r2: f64) -> Result<Self> {
        if !(r1 >= 0.0 && r2 > r1 && r2 <= std::f64::consts::PI) {
            return Err(LapError::ParameterOutOfRange(format!("bump radii need 0 <= r1 < r2 <= pi, got {r1}, {r2}")));
        }
        Ok(BumpFunction { center: wrap_point(center), r1, r2 })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, k: &[f64]) -> f64 {
        let r = torus_distance(&self.center, k);
        smooth_step((r - self.r1) / (self.r2 - self.r1))
    }

    pub fn contains(&self, k: &[f64]) -> bool {
        torus_distance(&self.center, k) < self.r2
    }
}

/// Integration window ρ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Window {
    Torus,
    Bump(BumpFunction),
    /// 1 - Σ bumps.
    Complement(Vec<BumpFunction>),
}

impl Window {
    pub fn eval(&self, k: &[f64]) -> f64 {
        match self {
            Window::Torus => 1.0,
            Window::Bump(b) => b.eval(k),
            Window::Complement(bs) => 1.0 - bs.iter().map(|b| b.eval(k)).sum::<f64>(),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Window::Torus)
    }

    /// Lebesgue measure of the support, an upper bound for ∫ρ.
    pub fn support_volume(&self, d: usize) -> f64 {
        match self {
            Window::Bump(b) => {
                let unit = match d {
                    1 => 2.0,
                    2 => std::f64::consts::PI,
                    3 => 4.0 / 3.0 * std::f64::consts::PI,
                    _ => std::f64::consts::TAU.powi(d as i32),
                };
                unit * b.r2.powi(d as i32)
            }
            _ => std::f64::consts::TAU.powi(d as i32),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Window::Torus => "torus".into(),
            Window::Bump(b) => format!("bump(c={:?},r1={},r2={})", b.center, b.r1, b.r2),
            Window::Complement(bs) => format!("complement({} bumps)", bs.len()),
        }
    }
}

/// Bumps around special points plus the complement 1 - Σ bumps.
#[derive(Clone, Debug, Serialize)]
pub struct Partition {
    pub bumps: Vec<BumpFunction>,
}

impl Partition {
    pub fn pieces(&self) -> Vec<Window> {
        if self.bumps.is_empty() {
            return vec![Window::Torus];
        }
        let mut v: Vec<Window> = self.bumps.iter().cloned().map(Window::Bump).collect();
        v.push(Window::Complement(self.bumps.clone()));
        v
    }

    pub fn sum_at(&self, k: &[f64]) -> f64 {
        self.pieces().iter().map(|w| w.eval(k)).sum()
    }

    /// Largest value of Σ bumps found on sampled points of pairwise overlaps.
    pub fn max_overlap(&self, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = |k: &[f64]| self.bumps.iter().map(|b| b.eval(k)).sum::<f64>();
        let mut worst: f64 = self.bumps.iter().map(|b| total(&b.center)).fold(0.0, f64::max);
        for (i, a) in self.bumps.iter().enumerate() {
            for b in &self.bumps[i + 1..] {
                if torus_distance(&a.center, &b.center) >= a.r2 + b.r2 {
                    continue;
                }
                let delta = torus_delta(&a.center, &b.center);
                for s in 0..=200 {
                    let t = s as f64 / 200.0;
                    let k: Vec<f64> = a.center.iter().zip(&delta).map(|(c, d)| c + t * d).collect();
                    worst = worst.max(total(&k));
                }
                for _ in 0..500 {
                    let k: Vec<f64> = a.center.iter().map(|c| c + rng.random_range(-a.r2..a.r2)).collect();
                    if b.contains(&k) {
                        worst = worst.max(total(&k));
                    }
                }
            }
        }
        worst
    }
}

/// Partition with one bump per special point. Each bump equals 1 on the
/// half-radius ball.
pub fn make_partition(points: &[(Vec<f64>, f64)]) -> Result<Partition> {
    let bumps = points.iter().map(|(c, r)| BumpFunction::new(c, 0.5 * r, *r)).collect::<Result<Vec<_>>>()?;
    let p = Partition { bumps };
    let worst = p.max_overlap(11);
    if worst > 1.0 + 1e-12 {
        return Err(LapError::OverlapTooLarge(worst));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_smooth_across_seams() {
        let h = 1e-4;
        for &s0 in &[0.0, 1.0] {
            let d1 = |s: f64| (smooth_step(s + h) - smooth_step(s - h)) / (2.0 * h);
            let d2 = |s: f64| (smooth_step(s + h) - 2.0 * smooth_step(s) + smooth_step(s - h)) / (h * h);
            assert!((smooth_step(s0 + 1e-3) - smooth_step(s0 - 1e-3)).abs() < 1e-6);
            assert!((d1(s0 + 1e-3) - d1(s0 - 1e-3)).abs() < 1e-6);
            assert!((d2(s0 + 2e-3) - d2(s0 - 2e-3)).abs() < 1e-6);
        }
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_sums_to_one() {
        let p = make_partition(&[(vec![0.0, 0.0, 0.0], 1.0)]).unwrap();
        assert_eq!(p.pieces().len(), 2);
        for k in [[0.1, 0.2, 0.3], [0.6, 0.0, 0.1], [3.0, -3.0, 1.0]] {
            assert!((p.sum_at(&k) - 1.0).abs() < 1e-12);
        }
        assert!((p.bumps[0].eval(&[0.49, 0.0, 0.0]) - 1.0).abs() == 0.0);
        let empty = make_partition(&[]).unwrap();
        assert_eq!(empty.pieces(), vec![Window::Torus]);
        let e = make_partition(&[(vec![0.0, 0.0], 1.0), (vec![0.3, 0.0], 1.0)]).unwrap_err();
        assert_eq!(e.name(), "OverlapTooLarge");
    }

    #[test]
    fn bump_wraps_around_torus() {
        let b = BumpFunction::new(&[3.1, 0.0], 0.1, 0.5).unwrap();
        assert!(b.eval(&[-3.1, 0.0]) > 0.99);
    }
}
