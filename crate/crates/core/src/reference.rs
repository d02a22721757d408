//! Reference models used by the tests, the acceptance suite and the CLI.

use crate::linalg::{pauli, CMat, C64, ONE};
use crate::model::{build_model, HoppingModel, HoppingSpec, Offset};

fn unit(d: usize, j: usize, s: i64) -> Offset {
    let mut m = vec![0; d];
    m[j] = s;
    m
}

fn scalar(x: f64) -> CMat {
    CMat::from_element(1, 1, C64::new(x, 0.0))
}

/// Discrete Laplacian with E(k) = 2 Σ_j cos k_j.
pub fn laplacian(d: usize) -> HoppingModel {
    let mut hops = Vec::new();
    for j in 0..d {
        hops.push((unit(d, j, 1), scalar(1.0)));
        hops.push((unit(d, j, -1), scalar(1.0)));
    }
    build_model(&HoppingSpec { name: format!("laplacian{d}d"), dimension: d, fiber_size: 1, hops }).unwrap()
}

/// E(k) = tilt sin(k_3) 1 + Σ_j sin(k_j) σ_j on Z^3.
pub fn weyl_toy(tilt: f64) -> HoppingModel {
    let s = pauli();
    let half_i = C64::new(0.0, 2.0).inv();
    let mut hops = Vec::new();
    for j in 0..3 {
        let mut h = &s[j] * half_i;
        if j == 2 {
            h += CMat::identity(2, 2) * (half_i * tilt);
        }
        hops.push((unit(3, j, -1), -h.clone()));
        hops.push((unit(3, j, 1), h));
    }
    let name = if tilt == 0.0 { "weyl_toy".to_string() } else { format!("weyl_tilt_{tilt}") };
    build_model(&HoppingSpec { name, dimension: 3, fiber_size: 2, hops }).unwrap()
}

/// E(k) = -4 cos k_1 + cos 2k_1 + cos k_2 on Z^2; the minimum at k = 0 has
/// a vanishing second derivative in k_1.
pub fn nonmorse_2d() -> HoppingModel {
    let hops = vec![
        (vec![1, 0], scalar(-2.0)),
        (vec![-1, 0], scalar(-2.0)),
        (vec![2, 0], scalar(0.5)),
        (vec![-2, 0], scalar(0.5)),
        (vec![0, 1], scalar(0.5)),
        (vec![0, -1], scalar(0.5)),
    ];
    build_model(&HoppingSpec { name: "nonmorse2d".into(), dimension: 2, fiber_size: 1, hops }).unwrap()
}

/// Constant symbol E(k) = c on Z^d.
pub fn constant(d: usize, c: f64) -> HoppingModel {
    let hops = vec![(vec![0; d], CMat::from_element(1, 1, ONE * c))];
    build_model(&HoppingSpec { name: format!("constant{d}d"), dimension: d, fiber_size: 1, hops }).unwrap()
}

/// Look up a built-in model by name.
///
/// Accepted names: `laplacian2d`, `laplacian3d`, `weyl_toy`, `weyl_tilt:<x>`,
/// `nonmorse2d`, `constant<d>d`.
pub fn by_name(name: &str) -> Option<HoppingModel> {
    match name {
        "laplacian2d" => Some(laplacian(2)),
        "laplacian3d" => Some(laplacian(3)),
        "weyl_toy" => Some(weyl_toy(0.0)),
        "nonmorse2d" => Some(nonmorse_2d()),
        "constant2d" => Some(constant(2, 0.0)),
        "constant3d" => Some(constant(3, 0.0)),
        _ => name.strip_prefix("weyl_tilt:").and_then(|t| t.parse().ok()).map(weyl_toy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eval_symbol;

    #[test]
    fn tilted_toy_symbol() {
        let m = weyl_toy(0.5);
        let k = [0.2, -0.4, 0.9];
        let e = eval_symbol(&m, &k, 0).value;
        let s = pauli();
        let mut want = CMat::identity(2, 2) * C64::new(0.5 * k[2].sin(), 0.0);
        for j in 0..3 {
            want += &s[j] * C64::new(k[j].sin(), 0.0);
        }
        assert!(crate::linalg::max_abs(&(e - want)) < 1e-14);
    }

    #[test]
    fn nonmorse_curvature_vanishes() {
        let m = nonmorse_2d();
        let s = eval_symbol(&m, &[0.0, 0.0], 2);
        assert!(s.hessian[0][0][(0, 0)].norm() < 1e-14);
        assert!((s.value[(0, 0)].re + 2.0).abs() < 1e-14);
    }

    #[test]
    fn names_resolve() {
        assert!(by_name("weyl_tilt:1.5").is_some());
        assert!(by_name("nope").is_none());
    }
}
