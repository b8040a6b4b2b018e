//! Channel realizations and received uplink data / training blocks.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scenario::{PilotBook, SlowFading};
use crate::{CMat, Error, Result, C64};

/// Draws one `CN(0, 1)` sample.
pub fn cn01<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// Matrix with i.i.d. `CN(0, 1)` entries, filled column by column.
pub fn cn_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for z in m.iter_mut() {
        *z = cn01(rng);
    }
    m
}

/// True channels `H = A B^{1/2}` from all users to one base station.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub h: CMat,
    /// Fast fading, i.i.d. `CN(0, 1)`.
    pub a: CMat,
    pub beta: Vec<f64>,
    pub users_per_cell: usize,
}

impl ChannelSet {
    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn total_users(&self) -> usize {
        self.h.ncols()
    }

    pub fn cell_block(&self, i: usize) -> CMat {
        self.h.columns(i * self.users_per_cell, self.users_per_cell).into_owned()
    }
}

pub fn draw_channels<R: Rng + ?Sized>(fading: &SlowFading, antennas: usize, rng: &mut R) -> ChannelSet {
    draw_channels_from_betas(&fading.beta, fading.users_per_cell, antennas, rng)
}

/// Like [`draw_channels`] but accepts arbitrary nonnegative coefficients,
/// including zero.
pub fn draw_channels_from_betas<R: Rng + ?Sized>(
    beta: &[f64],
    users_per_cell: usize,
    antennas: usize,
    rng: &mut R,
) -> ChannelSet {
    let a = cn_matrix(antennas, beta.len(), rng);
    let mut h = a.clone();
    for (mut col, b) in h.column_iter_mut().zip(beta) {
        col.scale_mut(b.sqrt());
    }
    ChannelSet {
        h,
        a,
        beta: beta.to_vec(),
        users_per_cell,
    }
}

/// Observations at one base station.
#[derive(Clone, Debug)]
pub struct ReceivedSignals {
    /// `M x T_ul` uplink data.
    pub y_ul: CMat,
    /// `M x T_tr` training block.
    pub y_tr: CMat,
    /// `T_ul x LK` transmitted symbols, kept for the genie bound.
    pub x: CMat,
}

/// `Y_ul = sqrt(rho_ul) H X^H + N_ul` with fresh symbols.
pub fn synth_uplink_data<R: Rng + ?Sized>(
    channels: &ChannelSet,
    rho_ul: f64,
    t_ul: usize,
    rng: &mut R,
) -> (CMat, CMat) {
    let x = cn_matrix(t_ul, channels.total_users(), rng);
    let y = uplink_with_symbols(&channels.h, &x, rho_ul, 1.0, rng);
    (y, x)
}

/// `Y_ul = sqrt(rho_ul) H X^H + noise_scale * N_ul` for given symbols.
/// `noise_scale = 0` gives the noiseless model identity.
pub fn uplink_with_symbols<R: Rng + ?Sized>(
    h: &CMat,
    x: &CMat,
    rho_ul: f64,
    noise_scale: f64,
    rng: &mut R,
) -> CMat {
    let mut y = h * x.adjoint() * C64::new(rho_ul.sqrt(), 0.0);
    add_noise(&mut y, noise_scale, rng);
    y
}

fn add_noise<R: Rng + ?Sized>(y: &mut CMat, noise_scale: f64, rng: &mut R) {
    // noise is always drawn so that the rng stream does not depend on the scale
    for z in y.iter_mut() {
        let n = cn01(rng);
        *z += n * noise_scale;
    }
}

/// `Y_tr = sqrt(rho_tr) sum_i H_i Psi_i^H + N_tr`.
pub fn synth_training<R: Rng + ?Sized>(
    channels: &ChannelSet,
    rho_tr: f64,
    pilots: &PilotBook,
    rng: &mut R,
) -> Result<CMat> {
    synth_training_scaled(&channels.h, rho_tr, pilots, 1.0, rng)
}

pub fn synth_training_scaled<R: Rng + ?Sized>(
    h: &CMat,
    rho_tr: f64,
    pilots: &PilotBook,
    noise_scale: f64,
    rng: &mut R,
) -> Result<CMat> {
    if h.ncols() != pilots.total_users() {
        return Err(Error::Dimension(format!(
            "channel matrix has {} users but the pilot book has {}",
            h.ncols(),
            pilots.total_users()
        )));
    }
    let mut y = h * pilots.psi().adjoint() * C64::new(rho_tr.sqrt(), 0.0);
    add_noise(&mut y, noise_scale, rng);
    Ok(y)
}

/// Writes a complex matrix as CSV: one line per row, each entry as two
/// fields `re,im`.
pub fn write_matrix_csv<W: Write>(m: &CMat, mut out: W) -> Result<()> {
    for r in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols())
            .map(|c| format!("{:e},{:e}", m[(r, c)].re, m[(r, c)].im))
            .collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<CMat> {
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("bad matrix entry: {e}")))?;
        if vals.len() % 2 != 0 {
            return Err(Error::InvalidInput("odd number of fields in matrix row".into()));
        }
        rows.push(vals.chunks(2).map(|p| C64::new(p[0], p[1])).collect());
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInput("ragged matrix rows".into()));
    }
    Ok(CMat::from_fn(nrows, ncols, |r, c| rows[r][c]))
}
