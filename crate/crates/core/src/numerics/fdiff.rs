/// Default central-difference step.
pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Component-wise central differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let fp = f(&probe);
            probe[i] = orig - eps;
            let fm = f(&probe);
            probe[i] = orig;
            (fp - fm) / (2.0 * eps)
        })
        .collect()
}

/// `||a - b||_inf / max(||b||_inf, floor)`; the norm-wise relative error used
/// for gradient checks.
pub fn max_relative_error(approx: &[f64], exact: &[f64], floor: f64) -> f64 {
    let diff = approx
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = exact.iter().map(|b| b.abs()).fold(floor, f64::max);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{complex_to_real, log_det_hpd, real_gradient, real_to_complex};
    use crate::{CMat, C64};

    #[test]
    fn quadratic() {
        // f = x^T Q x with symmetric Q, grad = 2 Q x
        let q = [[3.0, 0.5, 0.0], [0.5, 2.0, -0.3], [0.0, -0.3, 1.0]];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += x[i] * q[i][j] * x[j];
                }
            }
            s
        };
        let x = [0.4, -1.2, 2.0];
        let fd = finite_diff_grad(f, &x, DEFAULT_FD_EPS);
        let exact: Vec<f64> = (0..3)
            .map(|i| 2.0 * (0..3).map(|j| q[i][j] * x[j]).sum::<f64>())
            .collect();
        assert!(max_relative_error(&fd, &exact, 1e-12) < 1e-6);
    }

    #[test]
    fn log_det_of_shifted_gram() {
        // f = log det(I + H^H H), df/dH* = H (I + H^H H)^{-1}
        let h = CMat::from_fn(4, 2, |i, j| C64::new(0.2 * i as f64 - 0.1, 0.3 * j as f64 + 0.05 * i as f64));
        let f = |v: &[f64]| {
            let hh = real_to_complex(v, 4, 2).unwrap();
            log_det_hpd(&(CMat::identity(2, 2) + hh.ad_mul(&hh))).unwrap()
        };
        let gram = CMat::identity(2, 2) + h.ad_mul(&h);
        let d = &h * gram.try_inverse().unwrap();
        let exact = real_gradient(&d);
        let fd = finite_diff_grad(f, &complex_to_real(&h), DEFAULT_FD_EPS);
        assert!(max_relative_error(&fd, &exact, 1e-12) < 1e-6);
    }

    #[test]
    fn trace_form() {
        // f = tr(H^H A H) with Hermitian A, df/dH* = A H
        let a = CMat::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new(2.0 + i as f64, 0.0)
            } else if i < j {
                C64::new(0.1, 0.2 * (i + j) as f64)
            } else {
                C64::new(0.1, -0.2 * (i + j) as f64)
            }
        });
        let h = CMat::from_fn(3, 2, |i, j| C64::new(i as f64 - j as f64, 0.5 * (i * j) as f64 + 0.1));
        let f = |v: &[f64]| {
            let hh = real_to_complex(v, 3, 2).unwrap();
            hh.ad_mul(&(&a * &hh)).trace().re
        };
        let exact = real_gradient(&(&a * &h));
        let fd = finite_diff_grad(f, &complex_to_real(&h), DEFAULT_FD_EPS);
        assert!(max_relative_error(&fd, &exact, 1e-12) < 1e-6);
    }
}
