#![allow(dead_code)]

use chanest::scenario::{dft_pilots, PilotBook};
use chanest::CMat;
use rand::Rng;

/// Every cell reuses the first `k` columns of the `t x t` DFT matrix.
pub fn shared_pilots(l: usize, k: usize, t: usize) -> PilotBook {
    let base = dft_pilots(t, k);
    let mut psi = CMat::zeros(t, l * k);
    for i in 0..l {
        psi.columns_mut(i * k, k).copy_from(&base);
    }
    PilotBook::new(psi, k).unwrap()
}

/// Independent unit-norm Gaussian pilots.
pub fn random_pilots<R: Rng>(l: usize, k: usize, t: usize, rng: &mut R) -> PilotBook {
    let mut psi = chanest::signal::cn_matrix(t, l * k, rng);
    for mut col in psi.column_iter_mut() {
        let n = col.norm();
        col.unscale_mut(n);
    }
    PilotBook::new(psi, k).unwrap()
}

/// Log-uniform coefficients in `[lo, hi]`.
pub fn log_uniform<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| (rng.random_range(lo.ln()..hi.ln())).exp())
        .collect()
}

pub fn desk_config_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}
