//! Network geometry, user drops, slow fading and pilot allocation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{CMat, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotReuse {
    /// Every cell reuses the same `K` orthonormal sequences.
    SharedOrthonormal,
    /// Independent complex Gaussian sequences normalized to unit norm.
    PerCellRandomUnitNorm,
}

fn default_isd() -> f64 {
    500.0
}
fn default_shadow() -> f64 {
    6.0
}
fn default_exponent() -> f64 {
    3.76
}
fn default_ref_db() -> f64 {
    128.1
}
fn default_min_distance() -> f64 {
    35.0
}
fn default_pilot_reuse() -> PilotReuse {
    PilotReuse::SharedOrthonormal
}

/// Immutable description of one experiment.
///
/// SNRs are linear and relative to unit noise power per receive antenna. The
/// pathloss is `pathloss_ref_dB + 10 * pathloss_exponent * log10(d / 1 km)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "L")]
    pub cells: usize,
    #[serde(rename = "K")]
    pub users_per_cell: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "T_ul")]
    pub t_ul: usize,
    #[serde(rename = "T_tr")]
    pub t_tr: usize,
    pub rho_ul: f64,
    /// Optional; when given it must equal `rho_ul * T_tr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tr: Option<f64>,
    /// Defaults to `rho_ul`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_dl: Option<f64>,
    /// Meters.
    #[serde(default = "default_isd")]
    pub inter_site_distance: f64,
    #[serde(rename = "shadow_sigma_dB", default = "default_shadow")]
    pub shadow_sigma_db: f64,
    #[serde(default = "default_exponent")]
    pub pathloss_exponent: f64,
    #[serde(rename = "pathloss_ref_dB", default = "default_ref_db")]
    pub pathloss_ref_db: f64,
    /// Meters; users closer than this to their base station are redrawn.
    #[serde(default = "default_min_distance")]
    pub min_user_distance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pilot_reuse")]
    pub pilot_reuse: PilotReuse,
}

impl Scenario {
    /// Scenario with the documented defaults for everything but the
    /// dimensions and the uplink SNR.
    pub fn new(cells: usize, users_per_cell: usize, antennas: usize, t_ul: usize, t_tr: usize, rho_ul: f64) -> Self {
        Self {
            cells,
            users_per_cell,
            antennas,
            t_ul,
            t_tr,
            rho_ul,
            rho_tr: None,
            rho_dl: None,
            inter_site_distance: default_isd(),
            shadow_sigma_db: default_shadow(),
            pathloss_exponent: default_exponent(),
            pathloss_ref_db: default_ref_db(),
            min_user_distance: default_min_distance(),
            seed: 0,
            pilot_reuse: default_pilot_reuse(),
        }
    }

    pub fn total_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    /// Training SNR; unit-norm pilots need `rho_tr = rho_ul * T_tr`.
    pub fn rho_tr(&self) -> f64 {
        self.rho_ul * self.t_tr as f64
    }

    pub fn rho_dl(&self) -> f64 {
        self.rho_dl.unwrap_or(self.rho_ul)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.cells == 0 || self.users_per_cell == 0 {
            return cfg("L and K must be at least 1".into());
        }
        if self.antennas == 0 {
            return cfg("M must be at least 1".into());
        }
        if self.t_tr < self.users_per_cell {
            return cfg(format!("T_tr ({}) must be at least K ({})", self.t_tr, self.users_per_cell));
        }
        for (name, v) in [("rho_ul", self.rho_ul), ("rho_dl", self.rho_dl())] {
            if !(v > 0.0 && v.is_finite()) {
                return cfg(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if let Some(rt) = self.rho_tr {
            let expect = self.rho_tr();
            if !((rt - expect).abs() <= 1e-12 * expect) {
                return cfg(format!("rho_tr ({rt}) must equal rho_ul * T_tr ({expect})"));
            }
        }
        if !(self.inter_site_distance > 0.0) {
            return cfg("inter_site_distance must be positive".into());
        }
        if !(self.shadow_sigma_db >= 0.0) {
            return cfg("shadow_sigma_dB must be nonnegative".into());
        }
        if !(self.min_user_distance > 0.0 && self.min_user_distance < 0.5 * self.inter_site_distance) {
            return cfg(format!(
                "min_user_distance must lie in (0, inter_site_distance/2), got {}",
                self.min_user_distance
            ));
        }
        if !self.pathloss_exponent.is_finite() || !self.pathloss_ref_db.is_finite() {
            return cfg("pathloss parameters must be finite".into());
        }
        lattice_generator(self.cells)?;
        Ok(())
    }
}

pub type Point = [f64; 2];

fn norm2(p: Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

fn is_centered_hexagonal(l: usize) -> Option<usize> {
    (0..).take_while(|n| 3 * n * (n + 1) + 1 <= l).find(|n| 3 * n * (n + 1) + 1 == l)
}

/// Generator `(i, j)` of the wrap-around superlattice, `L = i^2 + ij + j^2`.
/// `None` means no wrap-around (single cell).
fn lattice_generator(l: usize) -> Result<Option<(i64, i64)>> {
    if l == 1 {
        return Ok(None);
    }
    if l == 21 {
        return Ok(Some((4, 1)));
    }
    if let Some(n) = is_centered_hexagonal(l) {
        return Ok(Some((n as i64 + 1, n as i64)));
    }
    let li = l as i64;
    (0..)
        .take_while(|j| 3 * j * j <= li)
        .find_map(|j| (j..=li).take_while(|i| i * i <= li).find(|i| i * i + i * j + j * j == li).map(|i| (i, j)))
        .map(Some)
        .ok_or_else(|| {
            Error::Config(format!(
                "unsupported cell count L={l}; allowed: values i^2 + ij + j^2 (1, 3, 4, 7, 9, 12, 13, 16, 19, 21, ...)"
            ))
        })
}

/// Hexagonal site grid with toroidal (wrap-around) distances.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLayout {
    inter_site_distance: f64,
    sites: Vec<Point>,
    /// Superlattice translations; always contains the zero shift.
    shifts: Vec<Point>,
}

impl CellLayout {
    pub fn num_cells(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> Point {
        self.sites[i]
    }

    pub fn inter_site_distance(&self) -> f64 {
        self.inter_site_distance
    }

    pub fn wrap_shifts(&self) -> &[Point] {
        &self.shifts
    }

    pub fn wrapped_distance(&self, a: Point, b: Point) -> f64 {
        self.shifts
            .iter()
            .map(|s| norm2([a[0] - b[0] + s[0], a[1] - b[1] + s[1]]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Lays out `L` hexagonal cells with site 0 (the reference base station) at
/// the origin.
pub fn build_layout(scenario: &Scenario) -> Result<CellLayout> {
    let l = scenario.cells;
    let d = scenario.inter_site_distance;
    let e1 = [d, 0.0];
    let e2 = [0.5 * d, 0.5 * 3f64.sqrt() * d];
    let at = |n1: i64, n2: i64| [n1 as f64 * e1[0] + n2 as f64 * e2[0], n1 as f64 * e1[1] + n2 as f64 * e2[1]];

    let Some((i, j)) = lattice_generator(l)? else {
        return Ok(CellLayout {
            inter_site_distance: d,
            sites: vec![[0.0, 0.0]],
            shifts: vec![[0.0, 0.0]],
        });
    };

    let li = l as i64;
    let class = |n1: i64, n2: i64| {
        (
            ((i + j) * n1 + j * n2).rem_euclid(li),
            (-j * n1 + i * n2).rem_euclid(li),
        )
    };
    let reach = i + j + 1;
    let mut cand: Vec<(f64, f64, i64, i64)> = Vec::new();
    for n1 in -reach..=reach {
        for n2 in -reach..=reach {
            let p = at(n1, n2);
            let r = (norm2(p) / d * 1e9).round() / 1e9;
            let mut ang = p[1].atan2(p[0]);
            if ang < -1e-12 {
                ang += 2.0 * PI;
            }
            cand.push((r, (ang * 1e9).round() / 1e9, n1, n2));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut seen = std::collections::HashSet::new();
    let mut sites = Vec::with_capacity(l);
    for &(_, _, n1, n2) in &cand {
        if seen.insert(class(n1, n2)) {
            sites.push(at(n1, n2));
            if sites.len() == l {
                break;
            }
        }
    }
    debug_assert_eq!(sites.len(), l);

    let a1 = at(i, j);
    let a2 = at(-j, i + j);
    let mut shifts = Vec::new();
    for m1 in -2i64..=2 {
        for m2 in -2i64..=2 {
            shifts.push([
                m1 as f64 * a1[0] + m2 as f64 * a2[0],
                m1 as f64 * a1[1] + m2 as f64 * a2[1],
            ]);
        }
    }
    Ok(CellLayout {
        inter_site_distance: d,
        sites,
        shifts,
    })
}

/// User positions, flattened as `n = i * K + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct UserPositions {
    pub positions: Vec<Point>,
    pub users_per_cell: usize,
}

impl UserPositions {
    pub fn cell_of(&self, n: usize) -> usize {
        n / self.users_per_cell
    }
}

/// True if `p` (relative to its site) lies in the hexagonal cell of a site
/// grid with the given inter-site distance. Neighbouring sites lie along
/// multiples of 60 degrees, so the cell's vertices point along the y axis.
pub fn in_hexagon(p: Point, inter_site_distance: f64) -> bool {
    let apothem = 0.5 * inter_site_distance;
    (0..3).all(|k| {
        let a = k as f64 * PI / 3.0;
        (p[0] * a.cos() + p[1] * a.sin()).abs() <= apothem
    })
}

/// Drops `K` users uniformly in every hexagon, redrawing any user closer
/// than `min_user_distance` to its own site.
pub fn drop_users<R: Rng + ?Sized>(layout: &CellLayout, scenario: &Scenario, rng: &mut R) -> UserPositions {
    let d = layout.inter_site_distance();
    let circ = d / 3f64.sqrt();
    let apothem = 0.5 * d;
    let mut positions = Vec::with_capacity(layout.num_cells() * scenario.users_per_cell);
    for site in layout.sites() {
        for _ in 0..scenario.users_per_cell {
            let p = loop {
                let q = [rng.random_range(-apothem..apothem), rng.random_range(-circ..circ)];
                if in_hexagon(q, d) && norm2(q) >= scenario.min_user_distance {
                    break q;
                }
            };
            positions.push([site[0] + p[0], site[1] + p[1]]);
        }
    }
    UserPositions {
        positions,
        users_per_cell: scenario.users_per_cell,
    }
}

/// Pathloss in dB at distance `d` meters.
pub fn pathloss_db(scenario: &Scenario, d: f64) -> f64 {
    scenario.pathloss_ref_db + 10.0 * scenario.pathloss_exponent * (d / 1000.0).log10()
}

/// Slow-fading coefficients of all users towards one base station.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowFading {
    pub beta: Vec<f64>,
    pub users_per_cell: usize,
}

impl SlowFading {
    pub fn new(beta: Vec<f64>, users_per_cell: usize) -> Result<Self> {
        if users_per_cell == 0 || beta.len() % users_per_cell != 0 {
            return Err(Error::Dimension(format!(
                "{} coefficients do not split into cells of {users_per_cell}",
                beta.len()
            )));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput(format!("slow-fading coefficient {b} is not positive and finite")));
        }
        Ok(Self { beta, users_per_cell })
    }

    pub fn cells(&self) -> usize {
        self.beta.len() / self.users_per_cell
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.beta[i * self.users_per_cell..(i + 1) * self.users_per_cell]
    }

    /// Reorders cells so that cell `first` comes first, the others keeping
    /// their relative order.
    pub fn reorder_cells(&self, order: &[usize]) -> SlowFading {
        let beta = order.iter().flat_map(|&i| self.cell(i).iter().copied()).collect();
        SlowFading {
            beta,
            users_per_cell: self.users_per_cell,
        }
    }
}

/// Slow fading towards base station `bs`, using the wrapped distance.
pub fn slow_fading_to<R: Rng + ?Sized>(
    bs: usize,
    positions: &UserPositions,
    layout: &CellLayout,
    scenario: &Scenario,
    rng: &mut R,
) -> SlowFading {
    let site = layout.site(bs);
    let shadow = Normal::new(0.0, scenario.shadow_sigma_db).expect("validated sigma");
    let beta = positions
        .positions
        .iter()
        .map(|&p| {
            let dist = layout.wrapped_distance(p, site).max(1e-3);
            let s = if scenario.shadow_sigma_db > 0.0 {
                shadow.sample(rng)
            } else {
                0.0
            };
            10f64.powf(-(pathloss_db(scenario, dist) + s) / 10.0)
        })
        .collect();
    SlowFading {
        beta,
        users_per_cell: positions.users_per_cell,
    }
}

/// Slow fading towards base station 1 (index 0).
pub fn slow_fading<R: Rng + ?Sized>(
    positions: &UserPositions,
    layout: &CellLayout,
    scenario: &Scenario,
    rng: &mut R,
) -> SlowFading {
    slow_fading_to(0, positions, layout, scenario, rng)
}

/// Slow fading from every user to every base station, index 0 first.
pub fn network_fading<R: Rng + ?Sized>(
    positions: &UserPositions,
    layout: &CellLayout,
    scenario: &Scenario,
    rng: &mut R,
) -> Vec<SlowFading> {
    (0..layout.num_cells())
        .map(|bs| slow_fading_to(bs, positions, layout, scenario, rng))
        .collect()
}

/// Pilot matrix `Psi` (`T_tr x LK`); column `n` is the unit-norm pilot of
/// user `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    psi: CMat,
    users_per_cell: usize,
}

impl PilotBook {
    pub fn new(psi: CMat, users_per_cell: usize) -> Result<Self> {
        if users_per_cell == 0 || psi.ncols() % users_per_cell != 0 {
            return Err(Error::Dimension(format!(
                "{} pilot columns do not split into cells of {users_per_cell}",
                psi.ncols()
            )));
        }
        for (n, col) in psi.column_iter().enumerate() {
            let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (nrm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("pilot column {n} has norm {nrm}, expected 1")));
            }
        }
        Ok(Self { psi, users_per_cell })
    }

    pub fn psi(&self) -> &CMat {
        &self.psi
    }

    pub fn t_tr(&self) -> usize {
        self.psi.nrows()
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    pub fn cells(&self) -> usize {
        self.psi.ncols() / self.users_per_cell
    }

    pub fn total_users(&self) -> usize {
        self.psi.ncols()
    }

    /// Pilot block `Psi_i` of cell `i` (0-based).
    pub fn block(&self, i: usize) -> CMat {
        self.psi.columns(i * self.users_per_cell, self.users_per_cell).into_owned()
    }

    /// Users `n` and `m` transmit the identical pilot sequence.
    pub fn same_pilot(&self, n: usize, m: usize) -> bool {
        self.psi.column(n) == self.psi.column(m)
    }

    pub fn reorder_cells(&self, order: &[usize]) -> PilotBook {
        let k = self.users_per_cell;
        let mut psi = CMat::zeros(self.t_tr(), self.psi.ncols());
        for (dst, &src) in order.iter().enumerate() {
            psi.columns_mut(dst * k, k).copy_from(&self.psi.columns(src * k, k));
        }
        PilotBook {
            psi,
            users_per_cell: k,
        }
    }
}

/// First `k` columns of the unitary `t x t` DFT matrix.
pub fn dft_pilots(t: usize, k: usize) -> CMat {
    let scale = 1.0 / (t as f64).sqrt();
    CMat::from_fn(t, k, |r, c| C64::from_polar(scale, -2.0 * PI * (r * c) as f64 / t as f64))
}

pub fn allocate_pilots<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<PilotBook> {
    let k = scenario.users_per_cell;
    let t = scenario.t_tr;
    if t < k {
        return Err(Error::Config(format!("T_tr ({t}) must be at least K ({k})")));
    }
    let lk = scenario.total_users();
    let psi = match scenario.pilot_reuse {
        PilotReuse::SharedOrthonormal => {
            let base = dft_pilots(t, k);
            let mut psi = CMat::zeros(t, lk);
            for i in 0..scenario.cells {
                psi.columns_mut(i * k, k).copy_from(&base);
            }
            psi
        }
        PilotReuse::PerCellRandomUnitNorm => {
            let mut psi = crate::signal::cn_matrix(t, lk, rng);
            for mut col in psi.column_iter_mut() {
                let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                col.unscale_mut(nrm);
            }
            psi
        }
    };
    PilotBook::new(psi, k)
}
