//! Brillouin torus conventions: points live in (-pi, pi]^d with the Lebesgue
//! measure, distances use the flat torus metric.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Wrap a coordinate into (-pi, pi].
pub fn wrap(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(TWO_PI) - PI;
    if y <= -PI {
        y += TWO_PI;
    }
    y
}

pub fn wrap_point(k: &[f64]) -> Vec<f64> {
    k.iter().map(|&x| wrap(x)).collect()
}

/// Minimum over lattice shifts of the Euclidean distance.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = wrap(x - y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Displacement b - a taken on the nearest sheet.
pub fn torus_delta(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| wrap(y - x)).collect()
}

/// Regular seed grid with `res` points per axis at cell centres.
pub fn seed_grid(dim: usize, res: usize) -> Vec<Vec<f64>> {
    let h = TWO_PI / res as f64;
    let total = res.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut k = vec![0.0; dim];
            for c in k.iter_mut().rev() {
                let j = idx % res;
                idx /= res;
                *c = -PI + (j as f64 + 0.5) * h;
            }
            k
        })
        .collect()
}

/// Japanese bracket <n> = sqrt(1 + |n|^2).
pub fn bracket(n: &[i64]) -> f64 {
    (1.0 + n.iter().map(|&x| (x * x) as f64).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert!((wrap(-PI) - PI).abs() < 1e-15);
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(0.1 + TWO_PI) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn distance_uses_nearest_sheet() {
        let a = [PI - 0.1, 0.0];
        let b = [-PI + 0.1, 0.0];
        assert!((torus_distance(&a, &b) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn seed_grid_size() {
        let g = seed_grid(3, 4);
        assert_eq!(g.len(), 64);
        assert!(g.iter().all(|k| k.iter().all(|&x| x > -PI && x < PI)));
    }
}
