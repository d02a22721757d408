use std::sync::Arc;

use lapkit_core::oscillatory::{eval_i1_decay, holder_constant, CubicPhase, OscOptions, PhaseProblem};
use lapkit_core::C64;

#[test]
fn non_stationary_decay_in_two_dimensions() {
    let p = PhaseProblem::new(Arc::new(CubicPhase::definite(2)), &[0.0, 0.0], 0.2, 0.4).unwrap();
    let r = eval_i1_decay(&p, C64::new(0.0, 1.0), &[8.0, 16.0, 32.0, 64.0], 2, &[1.0, 0.0], &OscOptions::default()).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.slope.unwrap() <= -1.7);
}

#[test]
fn zero_amplitude_has_no_slope() {
    let p = PhaseProblem::new(Arc::new(CubicPhase::definite(2)), &[0.0, 0.0], 0.2, 0.4).unwrap().with_amplitude(0.0);
    let r = eval_i1_decay(&p, C64::new(0.0, 1.0), &[8.0, 16.0], 2, &[1.0, 0.0], &OscOptions::default()).unwrap();
    assert!(r.slope.is_none() && r.values.iter().all(|v| *v == 0.0));
}

// C_β = max |M(z) - M(z')| / (t|z - z'|)^β near the real axis, β = 0.4 < (d - 2)/2.
#[test]
fn hoelder_constant_stable_under_refinement() {
    let p = PhaseProblem::new(Arc::new(CubicPhase::definite(3)), &[0.0, 0.0, 0.0], 0.2, 0.4).unwrap();
    let o = OscOptions::default();
    let coarse: Vec<C64> = [0.05, 0.15, 0.25].iter().map(|&x| C64::new(x, 0.05)).collect();
    let fine: Vec<C64> = [0.05, 0.1, 0.15, 0.2, 0.25].iter().map(|&x| C64::new(x, 0.05)).collect();
    let c1 = holder_constant(&p, &coarse, 4.0, &[1.0, 0.0, 0.0], 0.4, &o).unwrap();
    let c2 = holder_constant(&p, &fine, 4.0, &[1.0, 0.0, 0.0], 0.4, &o).unwrap();
    assert!(c1.is_finite() && c1 > 0.0);
    assert!((c2 / c1 - 1.0).abs() <= 0.2, "{c1} {c2}");
}
