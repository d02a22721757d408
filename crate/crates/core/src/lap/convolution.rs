//! Σ_m <n-m>^{-d'} <m>^{-2α} against its power-law envelope.

use serde::Serialize;

use super::toeplitz::{box_sites, CubeFft};
use crate::error::{LapError, Result};
use crate::linalg::{C64, ZERO};
use crate::quad::gauss_legendre_on;
use crate::torus::bracket;

#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionBound {
    pub d: usize,
    pub d_prime: f64,
    pub alpha: f64,
    pub box_radius: usize,
    /// Envelope exponent q in <n>^{-q}: min{d', d' + 2α - d}.
    pub envelope: f64,
    pub max_ratio: f64,
    pub argmax: Vec<i64>,
    /// Estimated contribution of |m|_∞ beyond the summed box.
    pub tail: f64,
}

fn smooth_len(min: usize) -> usize {
    (min..)
        .find(|&p| {
            let mut q = p;
            for f in [2, 3, 5] {
                while q % f == 0 {
                    q /= f;
                }
            }
            q == 1
        })
        .unwrap()
}

/// ∫ over the surface of [-1,1]^d of |u|^{-p}.
fn cube_shell(d: usize, p: f64) -> f64 {
    let (x, w) = gauss_legendre_on(48, -1.0, 1.0);
    let face = match d {
        1 => 1.0,
        2 => x.iter().zip(&w).map(|(y, wy)| wy * (1.0 + y * y).powf(-p / 2.0)).sum(),
        3 => {
            let mut s = 0.0;
            for (y1, w1) in x.iter().zip(&w) {
                for (y2, w2) in x.iter().zip(&w) {
                    s += w1 * w2 * (1.0 + y1 * y1 + y2 * y2).powf(-p / 2.0);
                }
            }
            s
        }
        _ => unreachable!(),
    };
    2.0 * d as f64 * face
}

/// max over |n|_∞ <= N of <n>^q Σ_{m ∈ Z^d} <n-m>^{-d'} <m>^{-2α}. The
/// m-sum runs over the box |m|_∞ <= N + max(32, N) by FFT, and the rest is
/// added as the continuum tail of |m|^{-d'-2α}.
pub fn convolution_bound_check(d: usize, d_prime: f64, alpha: f64, n_box: usize) -> Result<ConvolutionBound> {
    if !(1..=3).contains(&d) {
        return Err(LapError::ParameterOutOfRange(format!("dimension {d} not in 1..=3")));
    }
    let p = d_prime + 2.0 * alpha;
    if !(p > d as f64) || !(d_prime > 0.0) || !(alpha > 0.0) {
        return Err(LapError::ParameterOutOfRange(format!("d' + 2α = {p} must exceed d = {d}")));
    }
    let r = n_box + n_box.max(32);
    let side = smooth_len(2 * (r + n_box) + 1);
    let fft = CubeFft::new(d, side);
    let index = |v: &[i64]| v.iter().fold(0usize, |acc, &x| acc * side + x.rem_euclid(side as i64) as usize);
    let mut f = vec![ZERO; fft.len()];
    for delta in box_sites(d, r + n_box) {
        f[index(&delta)] = C64::new(bracket(&delta).powf(-d_prime), 0.0);
    }
    let mut g = vec![ZERO; fft.len()];
    for m in box_sites(d, r) {
        g[index(&m)] = C64::new(bracket(&m).powf(-2.0 * alpha), 0.0);
    }
    fft.run(&mut f, false);
    fft.run(&mut g, false);
    for (a, b) in f.iter_mut().zip(&g) {
        *a *= b;
    }
    fft.run(&mut f, true);
    let scale = 1.0 / fft.len() as f64;
    let tail = cube_shell(d, p) * (r as f64 + 0.5).powf(d as f64 - p) / (p - d as f64);
    let envelope = d_prime.min(p - d as f64);
    let mut best = (0.0, vec![0; d]);
    for n in box_sites(d, n_box) {
        let ratio = (f[index(&n)].re * scale + tail) * bracket(&n).powf(envelope);
        if ratio > best.0 {
            best = (ratio, n);
        }
    }
    Ok(ConvolutionBound { d, d_prime, alpha, box_radius: n_box, envelope, max_ratio: best.0, argmax: best.1, tail })
}

/// Ratios at each box and the largest relative increase between consecutive boxes.
pub fn convolution_growth(d: usize, d_prime: f64, alpha: f64, boxes: &[usize]) -> Result<(Vec<ConvolutionBound>, f64)> {
    let runs: Vec<ConvolutionBound> = boxes.iter().map(|&n| convolution_bound_check(d, d_prime, alpha, n)).collect::<Result<_>>()?;
    let growth = runs.windows(2).map(|w| w[1].max_ratio / w[0].max_ratio - 1.0).fold(0.0, f64::max);
    Ok((runs, growth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_exponent_is_rejected() {
        assert_eq!(convolution_bound_check(3, 1.0, 1.0, 4).unwrap_err().name(), "ParameterOutOfRange");
    }

    #[test]
    fn matches_direct_sum_in_one_dimension() {
        let (dp, a, n) = (1.5, 0.75, 6usize);
        let c = convolution_bound_check(1, dp, a, n).unwrap();
        let br = |x: i64| ((1 + x * x) as f64).sqrt();
        let q = c.envelope;
        let best = (-(n as i64)..=n as i64)
            .map(|x| {
                let s: f64 = (-200_000i64..=200_000).map(|m| br(x - m).powf(-dp) * br(m).powf(-2.0 * a)).sum();
                s * br(x).powf(q)
            })
            .fold(0.0, f64::max);
        assert!((c.max_ratio - best).abs() < 2e-3 * best, "{} {}", c.max_ratio, best);
    }

    #[test]
    fn huge_alpha_keeps_the_origin_term() {
        let c = convolution_bound_check(3, 2.0, 10.0, 4).unwrap();
        assert_eq!(c.envelope, 2.0);
        assert!((c.max_ratio - 1.0).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn stable_under_doubling() {
        let (runs, growth) = convolution_growth(3, 2.0, 1.0, &[4, 8]).unwrap();
        assert!(growth < 0.1, "{:?}", runs.iter().map(|r| r.max_ratio).collect::<Vec<_>>());
    }
}
