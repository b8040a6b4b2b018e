use super::{EstimateFlag, EstimateSet, Method};
use crate::numerics::{svd, SvdResult};
use crate::{CMat, Error, Result, C64};

/// Assignment of users to singular-vector ranks: the strongest user gets
/// rank 0. Ties keep ascending user order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    /// `rank_of[n]`: rank (0-based) of user `n`.
    pub rank_of: Vec<usize>,
    /// `user_at[r]`: user holding rank `r`; the inverse of `rank_of`.
    pub user_at: Vec<usize>,
}

impl Permutation {
    pub fn len(&self) -> usize {
        self.rank_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank_of.is_empty()
    }
}

pub fn assign_permutation(beta: &[f64]) -> Permutation {
    let mut user_at: Vec<usize> = (0..beta.len()).collect();
    // stable sort keeps index order on ties
    user_at.sort_by(|&a, &b| beta[b].total_cmp(&beta[a]));
    let mut rank_of = vec![0; beta.len()];
    for (r, &n) in user_at.iter().enumerate() {
        rank_of[n] = r;
    }
    Permutation { rank_of, user_at }
}

/// Singular values of the blind MAP estimate.
///
/// `xi_n^2` is the nonnegative root of
/// `xi^4 + (2/rho + beta T) xi^2 + beta (T - sigma_n^2)/rho + 1/rho^2`,
/// clamped at zero, with `beta` the coefficient of the user at rank `n`.
pub fn blind_singular_values(
    sigma: &[f64],
    beta: &[f64],
    perm: &Permutation,
    rho_ul: f64,
    t_ul: usize,
) -> Result<Vec<f64>> {
    let n_users = beta.len();
    if sigma.len() < n_users {
        return Err(Error::InvalidInput(format!(
            "need {} singular values, got {}",
            n_users,
            sigma.len()
        )));
    }
    let t = t_ul as f64;
    Ok((0..n_users)
        .map(|n| {
            let b = beta[perm.user_at[n]];
            let s2 = sigma[n] * sigma[n];
            let half_p = 1.0 / rho_ul + 0.5 * b * t;
            let q = b * (t - s2) / rho_ul + 1.0 / (rho_ul * rho_ul);
            if q >= 0.0 {
                0.0
            } else {
                // larger root written without cancellation
                let root = (0.25 * b * b * t * t + b * s2 / rho_ul).sqrt();
                (-q / (half_p + root)).sqrt()
            }
        })
        .collect())
}

/// Rotates `v` so that its first non-negligible entry is real positive.
pub fn normalize_phase(v: &mut nalgebra::DVectorViewMut<'_, C64>) {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-6 * peak).copied() {
        let rot = z.conj() / z.norm();
        for e in v.iter_mut() {
            *e *= rot;
        }
    }
}

/// Blind MAP estimate `U_{1:KL} diag(xi) Pi^T` from an SVD of the uplink
/// data. `t_ul` is the number of uplink samples behind `dec`.
pub fn blind_from_svd(dec: &SvdResult, beta: &[f64], rho_ul: f64, t_ul: usize) -> Result<EstimateSet> {
    let n_users = beta.len();
    let m = dec.u.nrows();
    if m <= n_users {
        return Err(Error::Precondition(format!(
            "blind estimation needs more antennas than users (M={m}, KL={n_users})"
        )));
    }
    let mut flags = Vec::new();
    let available = dec.rank();
    if available < n_users {
        flags.push(EstimateFlag::SubspaceRankDeficient {
            available,
            needed: n_users,
        });
    }
    let mut sigma = dec.s.clone();
    sigma.resize(sigma.len().max(n_users), 0.0);
    let perm = assign_permutation(beta);
    let xi = blind_singular_values(&sigma, beta, &perm, rho_ul, t_ul)?;

    let mut h = CMat::zeros(m, n_users);
    for (r, &x) in xi.iter().enumerate() {
        if r >= available || x == 0.0 {
            continue;
        }
        let user = perm.user_at[r];
        let mut col = h.column_mut(user);
        col.copy_from(&dec.u.column(r));
        normalize_phase(&mut col);
        col.scale_mut(x);
    }
    let mut est = EstimateSet::new(Method::Blind, h);
    est.permutation = Some(perm);
    est.flags = flags;
    Ok(est)
}

pub fn blind_map_estimate(y_ul: &CMat, beta: &[f64], rho_ul: f64) -> Result<EstimateSet> {
    if y_ul.nrows() <= beta.len() {
        return Err(Error::Precondition(format!(
            "blind estimation needs more antennas than users (M={}, KL={})",
            y_ul.nrows(),
            beta.len()
        )));
    }
    let dec = svd(y_ul)?;
    blind_from_svd(&dec, beta, rho_ul, y_ul.ncols())
}
