//! Fixtures shared by the benchmarks.

use lapkit_core::green::{green_table, GreenOptions, Window};
use lapkit_core::lap::{DampedResolvent, LapOptions};
use lapkit_core::{reference, C64};

/// Damped resolvent of the 3-d Laplacian at z = 1 + i on the box of radius `n`.
pub fn damped_laplacian(n: usize) -> DampedResolvent {
    let m = reference::laplacian(3);
    let t = green_table(&m, C64::new(1.0, 1.0), 2 * n, &Window::Torus, &LapOptions::default().green).expect("table");
    DampedResolvent::from_table(&t, 1.6, n, &Window::Torus).expect("operator")
}

pub fn quick_green() -> GreenOptions {
    GreenOptions { rel_tol: 1e-6, ..Default::default() }
}
