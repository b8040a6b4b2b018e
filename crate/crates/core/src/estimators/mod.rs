//! Channel estimators: training-based LS and MAP/MMSE, blind MAP, pilot-aware
//! subspace projection (PASP), semi-blind MAP and the genie-aided bound.
//!
//! All estimators are written from the point of view of base station 1:
//! cell 0 of the pilot book and of the slow-fading vector is the desired
//! cell. Other base stations are handled by reordering cells first.

mod blind;
mod genie;
mod pasp;
mod semiblind;
mod training;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numerics::OptimStatus;
use crate::{CMat, Error};

pub use blind::{
    assign_permutation, blind_from_svd, blind_map_estimate, blind_singular_values, normalize_phase,
    Permutation,
};
pub use genie::genie_bound_estimate;
pub use pasp::{
    pasp_estimate, pasp_from_svd, pasp_window, weighted_projection, InterfererSet, PaspOptions,
    PaspWindow,
};
pub use semiblind::{
    semi_blind_estimate, semi_blind_estimate_observed, semi_blind_gradient, semi_blind_objective,
    SemiBlindProblem,
};
pub use training::{ls_all, ls_estimate, mmse_first_block, train_map_estimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ls,
    TrainMap,
    Blind,
    Pasp,
    SemiBlind,
    Genie,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ls,
        Method::TrainMap,
        Method::Blind,
        Method::Pasp,
        Method::SemiBlind,
        Method::Genie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::TrainMap => "train_map",
            Method::Blind => "blind",
            Method::Pasp => "pasp",
            Method::SemiBlind => "semi_blind",
            Method::Genie => "genie",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}'; expected one of ls, train_map, blind, pasp, semi_blind, genie"
                ))
            })
    }
}

/// Non-fatal conditions raised while estimating.
#[derive(Clone, Debug, PartialEq)]
pub enum EstimateFlag {
    /// Fewer uplink samples than users; trailing ranks have zero singular
    /// values.
    SubspaceRankDeficient { available: usize, needed: usize },
    /// Requested projection rank exceeded the available singular vectors.
    RankClamped { requested: usize, used: usize },
    /// PASP window came out empty for this user; single-vector projection
    /// was used instead.
    WindowFallback { user: usize },
    /// The optimizer stopped on a line-search failure.
    Optimizer(OptimStatus),
}

/// Estimated channels of all `LK` users at one base station.
#[derive(Clone, Debug)]
pub struct EstimateSet {
    pub method: Method,
    /// `M x LK`; column `n` estimates user `n`.
    pub h_hat: CMat,
    /// User-to-singular-vector assignment (blind and PASP).
    pub permutation: Option<Permutation>,
    /// Objective after each optimizer iteration (semi-blind).
    pub trace: Option<Vec<f64>>,
    pub flags: Vec<EstimateFlag>,
}

impl EstimateSet {
    pub fn new(method: Method, h_hat: CMat) -> Self {
        Self {
            method,
            h_hat,
            permutation: None,
            trace: None,
            flags: Vec::new(),
        }
    }

    /// Estimate whose cell-0 block comes from `first_cell` and whose other
    /// blocks are the per-pilot-group LS estimates.
    pub fn padded(method: Method, first_cell: &CMat, ls_all: &CMat) -> Self {
        let mut h = ls_all.clone();
        h.columns_mut(0, first_cell.ncols()).copy_from(first_cell);
        Self::new(method, h)
    }

    pub fn cell_block(&self, cell: usize, users_per_cell: usize) -> CMat {
        self.h_hat.columns(cell * users_per_cell, users_per_cell).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.h_hat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("mmse".parse::<Method>().is_err());
    }
}
