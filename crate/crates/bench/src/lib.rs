//! Shared fixtures for the benchmarks.

use qsm_core::{basis_state, DensityMatrix, QsmParams};

/// Projector onto momentum `p = 1`, the usual echo starting point.
pub fn start_state(n: usize) -> DensityMatrix {
    basis_state(n, 1).expect("n within limits").to_density()
}

pub fn params(n: usize, k: f64) -> QsmParams {
    QsmParams::new(n, 1, k).expect("valid parameters")
}
