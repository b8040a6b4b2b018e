use super::mmse_first_block;
use crate::scenario::PilotBook;
use crate::{CMat, Error, Result, C64};

/// MMSE estimate of the desired cell's channels when the uplink data symbols
/// are known: the data block acts as additional pilots.
///
/// The stacked model is `[Y_tr, Y_ul] = H Phi^H + N` with
/// `Phi = [sqrt(rho_tr) Psi; sqrt(rho_ul) X]` and unit-variance noise.
pub fn genie_bound_estimate(
    y_tr: &CMat,
    y_ul: &CMat,
    x: &CMat,
    pilots: &PilotBook,
    beta: &[f64],
    rho_tr: f64,
    rho_ul: f64,
) -> Result<CMat> {
    let m = y_tr.nrows();
    let t_tr = pilots.t_tr();
    let t_ul = y_ul.ncols();
    let n = pilots.total_users();
    if y_ul.nrows() != m || x.shape() != (t_ul, n) || y_tr.ncols() != t_tr {
        return Err(Error::Dimension(format!(
            "Y_tr {}x{}, Y_ul {}x{}, X {}x{}, pilots {}x{}",
            m,
            y_tr.ncols(),
            y_ul.nrows(),
            t_ul,
            x.nrows(),
            x.ncols(),
            t_tr,
            n
        )));
    }
    let mut y = CMat::zeros(m, t_tr + t_ul);
    y.columns_mut(0, t_tr).copy_from(y_tr);
    y.columns_mut(t_tr, t_ul).copy_from(y_ul);
    let mut phi = CMat::zeros(t_tr + t_ul, n);
    phi.rows_mut(0, t_tr).copy_from(&(pilots.psi() * C64::new(rho_tr.sqrt(), 0.0)));
    phi.rows_mut(t_tr, t_ul).copy_from(&(x * C64::new(rho_ul.sqrt(), 0.0)));
    mmse_first_block(&y, &phi, beta, pilots.users_per_cell(), 1.0)
}
