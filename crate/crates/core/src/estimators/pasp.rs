//! Pilot-aware subspace projection (PASP): projects each user's LS estimate
//! onto a window of principal left singular vectors of the uplink data.
//!
//! The window around the user's own rank stops halfway (geometric mean of
//! slow-fading coefficients) towards the nearest stronger and weaker
//! contaminating users, so their singular vectors are excluded.

use serde::{Deserialize, Serialize};

use super::{assign_permutation, EstimateFlag, EstimateSet, Method, Permutation};
use crate::numerics::{svd, SvdResult};
use crate::scenario::PilotBook;
use crate::{CMat, Error, Result, C64};

/// Which users count as interferers when placing the window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfererSet {
    /// Users transmitting the identical pilot sequence.
    #[default]
    SamePilot,
    /// Every user outside the own cell.
    AllOtherCells,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaspOptions {
    /// Subspace dimension `R`; defaults to `LK`.
    pub rank: Option<usize>,
    pub interferers: InterfererSet,
}

/// Binary weights over ranks `0..R` for one user.
#[derive(Clone, Debug, PartialEq)]
pub struct PaspWindow {
    pub weights: Vec<f64>,
    /// First and last selected rank (inclusive), if any.
    pub bounds: Option<(usize, usize)>,
    /// True when the threshold rule selected no rank, leaving only the
    /// user's own singular vector.
    pub fallback: bool,
}

/// Window for `user` over `r` ranks.
pub fn pasp_window(
    user: usize,
    perm: &Permutation,
    beta: &[f64],
    pilots: &PilotBook,
    r: usize,
    interferers: InterfererSet,
) -> PaspWindow {
    let k = pilots.users_per_cell();
    let own = perm.rank_of[user];
    let interferes = |m: usize| {
        m != user
            && match interferers {
                InterfererSet::SamePilot => pilots.same_pilot(user, m),
                InterfererSet::AllOtherCells => m / k != user / k,
            }
    };
    let mut closest_better: Option<usize> = None;
    let mut closest_worse: Option<usize> = None;
    for m in (0..beta.len()).filter(|&m| interferes(m)) {
        let rm = perm.rank_of[m];
        if rm < own {
            closest_better = Some(closest_better.map_or(rm, |b| b.max(rm)));
        } else {
            closest_worse = Some(closest_worse.map_or(rm, |w| w.min(rm)));
        }
    }
    let b_own = beta[user];
    let upper = closest_better.map_or(f64::INFINITY, |l| (beta[perm.user_at[l]] * b_own).sqrt());
    let lower = closest_worse.map_or(f64::NEG_INFINITY, |u| (beta[perm.user_at[u]] * b_own).sqrt());

    // ranks beyond the user count belong to the noise subspace
    let beta_at = |n: usize| perm.user_at.get(n).map_or(0.0, |&u| beta[u]);
    let mut weights: Vec<f64> = (0..r)
        .map(|n| {
            let b = beta_at(n);
            if upper >= b && b >= lower {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let fallback = weights.iter().all(|&w| w == 0.0);
    if own < r {
        weights[own] = 1.0;
    }
    let first = weights.iter().position(|&w| w == 1.0);
    let last = weights.iter().rposition(|&w| w == 1.0);
    PaspWindow {
        bounds: first.zip(last),
        fallback,
        weights,
    }
}

/// `U diag(weights) U^H h` using the leading `weights.len()` columns of `u`.
pub fn weighted_projection(u: &CMat, weights: &[f64], h: &nalgebra::DVector<C64>) -> nalgebra::DVector<C64> {
    let mut out = nalgebra::DVector::zeros(u.nrows());
    for (n, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            let col = u.column(n);
            let coeff = col.dotc(h) * C64::new(w, 0.0);
            out.axpy(coeff, &col, C64::new(1.0, 0.0));
        }
    }
    out
}

pub fn pasp_from_svd(
    dec: &SvdResult,
    ls_all: &CMat,
    beta: &[f64],
    pilots: &PilotBook,
    opts: &PaspOptions,
) -> Result<EstimateSet> {
    let n_users = beta.len();
    if ls_all.ncols() != n_users || pilots.total_users() != n_users || ls_all.nrows() != dec.u.nrows() {
        return Err(Error::Dimension(format!(
            "LS estimates {}x{}, {} users, subspace of dimension {}",
            ls_all.nrows(),
            ls_all.ncols(),
            n_users,
            dec.u.nrows()
        )));
    }
    let mut flags = Vec::new();
    let requested = opts.rank.unwrap_or(n_users);
    let available = dec.rank();
    let r = requested.min(available);
    if r < requested {
        flags.push(EstimateFlag::RankClamped { requested, used: r });
    }
    let perm = assign_permutation(beta);
    let mut h = CMat::zeros(ls_all.nrows(), n_users);
    for user in 0..n_users {
        let win = pasp_window(user, &perm, beta, pilots, r, opts.interferers);
        if win.fallback {
            flags.push(EstimateFlag::WindowFallback { user });
        }
        let est = weighted_projection(&dec.u, &win.weights, &ls_all.column(user).into_owned());
        h.set_column(user, &est);
    }
    let mut out = EstimateSet::new(Method::Pasp, h);
    out.permutation = Some(perm);
    out.flags = flags;
    Ok(out)
}

pub fn pasp_estimate(
    y_ul: &CMat,
    ls_all: &CMat,
    beta: &[f64],
    pilots: &PilotBook,
    opts: &PaspOptions,
) -> Result<EstimateSet> {
    pasp_from_svd(&svd(y_ul)?, ls_all, beta, pilots, opts)
}
