mod common;

use std::time::Instant;

use lapkit_core::green::{extrapolate_to_axis, EpsSchedule, GreenOptions, Window};
use lapkit_core::reference;

#[test]
fn watson_oracle_value() {
    // Watson's closed form W = 1.516386059151978 for the 1 - Σcos/3 normalization.
    let w = 3.0 * common::cube_integral();
    assert!((w - 1.516386059151978).abs() < 1e-11, "{w}");
    assert!((common::watson_green() - common::WATSON_GREEN).abs() < 1e-13);
}

#[test]
fn watson_band_edge_limit() {
    let t = Instant::now();
    let m = reference::laplacian(3);
    let lim = extrapolate_to_axis(&m, &[0, 0, 0], &[0, 0, 0], 6.0, &Window::Torus, &EpsSchedule::default(), &GreenOptions::default()).unwrap();
    let want = common::watson_green();
    let rel = (lim.value[0].re - want).abs() / want.abs();
    eprintln!("G = {} want {want} rel {rel:e} beta {} in {:?}", lim.value[0], lim.beta_hat, t.elapsed());
    assert!(rel <= 1e-4);
    assert!(lim.value[0].im.abs() < 1e-3);
}
