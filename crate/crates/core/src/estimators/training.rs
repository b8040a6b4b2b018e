use crate::numerics::{cholesky, pseudo_inverse, svd};
use crate::scenario::PilotBook;
use crate::{CMat, Error, Result, C64};

fn check_finite(m: &CMat, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Least-squares estimate `(1/sqrt(rho_tr)) Y_tr (Psi_1^H)^+`.
pub fn ls_estimate(y_tr: &CMat, psi_1: &CMat, rho_tr: f64) -> Result<CMat> {
    if y_tr.ncols() != psi_1.nrows() {
        return Err(Error::Dimension(format!(
            "Y_tr has {} columns but pilots have length {}",
            y_tr.ncols(),
            psi_1.nrows()
        )));
    }
    let s = svd(psi_1)?;
    let smax = s.s.first().copied().unwrap_or(0.0);
    if s.rank() < psi_1.ncols() || s.s.iter().any(|&v| v <= 1e-10 * smax) {
        return Err(Error::RankDeficient("pilot matrix of the desired cell".into()));
    }
    let pinv = pseudo_inverse(&psi_1.adjoint())?;
    Ok(y_tr * pinv / C64::new(rho_tr.sqrt(), 0.0))
}

/// LS estimates for all users: cell `i` is estimated with its own pilot
/// block, so users sharing a pilot share the LS column.
pub fn ls_all(y_tr: &CMat, pilots: &PilotBook, rho_tr: f64) -> Result<CMat> {
    let k = pilots.users_per_cell();
    let mut out = CMat::zeros(y_tr.nrows(), pilots.total_users());
    for i in 0..pilots.cells() {
        let est = ls_estimate(y_tr, &pilots.block(i), rho_tr)?;
        out.columns_mut(i * k, k).copy_from(&est);
    }
    Ok(out)
}

/// Linear MMSE estimate of the first `k` columns of `H` in
/// `Y = H Phi^H + N` with `N` white of variance `noise_var` and
/// `H = A B^{1/2}`:
///
/// `H_1 = Y Q^{-1} Phi_1 (Phi_1^H Q^{-1} Phi_1 + B_1^{-1})^{-1}`,
/// `Q = noise_var I + sum_{i>1} Phi_i B_i Phi_i^H`.
pub fn mmse_first_block(y: &CMat, phi: &CMat, beta: &[f64], k: usize, noise_var: f64) -> Result<CMat> {
    let t = phi.nrows();
    if y.ncols() != t || phi.ncols() != beta.len() || k == 0 || k > beta.len() {
        return Err(Error::Dimension(format!(
            "observation {}x{}, pilots {}x{}, {} coefficients, block {}",
            y.nrows(),
            y.ncols(),
            t,
            phi.ncols(),
            beta.len(),
            k
        )));
    }
    if beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidInput("slow-fading coefficients must be positive".into()));
    }
    check_finite(y, "observation")?;
    check_finite(phi, "pilot matrix")?;

    let mut q = CMat::identity(t, t) * C64::new(noise_var, 0.0);
    if beta.len() > k {
        let rest = phi.columns(k, beta.len() - k);
        let mut scaled = rest.into_owned();
        for (mut col, b) in scaled.column_iter_mut().zip(&beta[k..]) {
            col.scale_mut(*b);
        }
        q += &scaled * rest.adjoint();
    }
    let phi_1 = phi.columns(0, k).into_owned();
    let z = cholesky(&q)?.solve(&phi_1)?;
    let mut s = phi_1.ad_mul(&z);
    for (j, b) in beta[..k].iter().enumerate() {
        s[(j, j)] += C64::new(1.0 / b, 0.0);
    }
    let yz = y * z;
    // (Y Z) S^{-1} = (S^{-1} (Y Z)^H)^H for Hermitian S
    let w = cholesky(&s)?.solve(&yz.adjoint())?;
    Ok(w.adjoint())
}

/// Training-based MAP (= MMSE) estimate of the desired cell's channels.
///
/// Equivalent to `Y_tr/sqrt(rho_tr) (I/rho_tr + sum_{i>1} Psi_i B_i Psi_i^H)^{-1} Psi_1
/// (Psi_1^H (..)^{-1} Psi_1 + B_1^{-1})^{-1}`.
pub fn train_map_estimate(y_tr: &CMat, pilots: &PilotBook, beta: &[f64], rho_tr: f64) -> Result<CMat> {
    let scaled = y_tr / C64::new(rho_tr.sqrt(), 0.0);
    mmse_first_block(&scaled, pilots.psi(), beta, pilots.users_per_cell(), 1.0 / rho_tr)
}
