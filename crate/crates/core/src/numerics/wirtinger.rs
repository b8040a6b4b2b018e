//! Bridge between complex matrix variables and the real vectors consumed by
//! the optimizer.
//!
//! Layout: `[Re vec(H); Im vec(H)]` with `vec` stacking columns. For a real
//! function `f(H)` with conjugate derivative `D = df/dH*`, the gradient with
//! respect to that real vector is `2 [Re vec(D); Im vec(D)]`.

use crate::{CMat, Error, Result, C64};

pub fn complex_to_real(h: &CMat) -> Vec<f64> {
    let n = h.len();
    let mut out = vec![0.0; 2 * n];
    for (idx, z) in h.iter().enumerate() {
        out[idx] = z.re;
        out[n + idx] = z.im;
    }
    out
}

pub fn real_to_complex(x: &[f64], rows: usize, cols: usize) -> Result<CMat> {
    let n = rows * cols;
    if x.len() != 2 * n {
        return Err(Error::Dimension(format!(
            "real vector of length {} cannot hold a {}x{} complex matrix",
            x.len(),
            rows,
            cols
        )));
    }
    Ok(CMat::from_iterator(
        rows,
        cols,
        (0..n).map(|i| C64::new(x[i], x[n + i])),
    ))
}

/// Real gradient from the conjugate (Wirtinger) derivative `df/dH*`.
pub fn real_gradient(conj_derivative: &CMat) -> Vec<f64> {
    let mut g = complex_to_real(conj_derivative);
    g.iter_mut().for_each(|v| *v *= 2.0);
    g
}
