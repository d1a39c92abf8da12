//! Shared inputs for the benchmarks.

use gpsysid_core::synth::{self, Series};
use gpsysid_core::{Kernel, KernelFamily, Matrix};

pub fn matern32() -> Kernel {
    Kernel::new(KernelFamily::Matern32, 1.0, 0.5).expect("valid kernel")
}

/// A noisy Matérn-3/2 draw at `n` sorted random times on [0, n/20].
pub fn matern_series(n: usize, seed: u64) -> Series {
    synth::gp_draw(&matern32(), n, n as f64 / 20.0, 0.1, seed).expect("prior draw")
}

/// Gram matrix of `n` evenly spaced points plus noise: symmetric positive definite.
pub fn spd(n: usize) -> Matrix {
    let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
    let x = Matrix::column(&t);
    let mut k = matern32().gram_symmetric(&x);
    k.add_diagonal(0.01);
    k
}
