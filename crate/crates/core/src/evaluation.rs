//! Estimation-quality metrics: subspace angles, MF/ZF precoders, downlink
//! rates, empirical CDFs and percentiles.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::estimators::Method;
use crate::numerics::{cholesky, pseudo_inverse};
use crate::{CMat, Error, Result, C64};

/// Subspace angle between a channel and its estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Angle {
    pub degrees: f64,
    /// The estimate was zero and the worst case of 90 degrees was reported.
    pub zero_estimate: bool,
}

/// `arccos(|h^H h_hat| / (||h|| ||h_hat||))` in degrees, within `[0, 90]`.
pub fn subspace_angle(h: &DVector<C64>, h_hat: &DVector<C64>) -> Result<Angle> {
    if h.len() != h_hat.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", h.len(), h_hat.len())));
    }
    let nh = h.norm();
    if nh == 0.0 || !nh.is_finite() {
        return Err(Error::InvalidInput("true channel is zero or not finite".into()));
    }
    let ne = h_hat.norm();
    if !ne.is_finite() {
        return Err(Error::NonFinite("channel estimate"));
    }
    if ne == 0.0 {
        return Ok(Angle {
            degrees: 90.0,
            zero_estimate: true,
        });
    }
    // atan2 of the orthogonal and parallel parts equals
    // arccos(|h^H h_hat| / (||h|| ||h_hat||)) but keeps full relative
    // accuracy for nearly collinear vectors
    let u = h / C64::new(nh, 0.0);
    let e = h_hat / C64::new(ne, 0.0);
    let along = u.dotc(&e);
    let across = (&e - &u * along).norm();
    Ok(Angle {
        degrees: across.atan2(along.norm()).to_degrees(),
        zero_estimate: false,
    })
}

/// Unit-norm beamformers for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Precoder {
    /// `M x K`.
    pub w: CMat,
    /// Some column could not be formed regularly: a zero MF column, or a
    /// rank-deficient ZF estimate handled by the pseudo-inverse.
    pub degraded: bool,
}

fn normalize_columns(w: &mut CMat) -> bool {
    let mut degraded = false;
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 && n.is_finite() {
            col.unscale_mut(n);
        } else {
            col.fill(C64::new(0.0, 0.0));
            degraded = true;
        }
    }
    degraded
}

/// Matched filter `w_k = h_k / ||h_k||`.
pub fn mf_precoder(h_hat: &CMat) -> Precoder {
    let mut w = h_hat.clone();
    let degraded = normalize_columns(&mut w);
    Precoder { w, degraded }
}

/// Zero forcing: normalized columns of `H (H^H H)^{-1}`, or of
/// `(H^H)^+` when the Gram matrix is singular.
pub fn zf_precoder(h_hat: &CMat) -> Precoder {
    let gram = h_hat.ad_mul(h_hat);
    let direct = cholesky(&gram)
        .and_then(|c| c.solve(&h_hat.adjoint()))
        .map(|x| x.adjoint())
        .ok()
        .filter(|w| w.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    let (mut w, mut degraded) = match direct {
        Some(w) => (w, false),
        None => match pseudo_inverse(&h_hat.adjoint()) {
            Ok(p) => (p, true),
            Err(_) => (CMat::zeros(h_hat.nrows(), h_hat.ncols()), true),
        },
    };
    degraded |= normalize_columns(&mut w);
    Precoder { w, degraded }
}

/// Downlink rates of all `LK` users.
///
/// `channels[i]` is `M x LK`: column `j K + k` is the true channel from base
/// station `i` to user `k` of cell `j`. `precoders[i]` is the `M x K`
/// precoder of base station `i`. Every user gets power `rho_dl / K` and
///
/// `SINR_jk = p |g_{j,jk}^H w_jk|^2 / (1 + p sum_{(i,m) != (j,k)} |g_{i,jk}^H w_im|^2)`.
pub fn downlink_rates(channels: &[CMat], precoders: &[CMat], rho_dl: f64, k: usize) -> Result<Vec<f64>> {
    let l = channels.len();
    if precoders.len() != l || l == 0 || k == 0 {
        return Err(Error::Dimension(format!(
            "{} channel sets, {} precoders, K = {k}",
            l,
            precoders.len()
        )));
    }
    let m = channels[0].nrows();
    for (i, (g, w)) in channels.iter().zip(precoders).enumerate() {
        if g.shape() != (m, l * k) || w.shape() != (m, k) {
            return Err(Error::Dimension(format!(
                "base station {i}: channels {}x{}, precoder {}x{}, expected {m}x{} and {m}x{k}",
                g.nrows(),
                g.ncols(),
                w.nrows(),
                w.ncols(),
                l * k
            )));
        }
    }
    let p = rho_dl / k as f64;
    // gains[i][(m, n)] = |g_{i,n}^H w_{i,m}|^2
    let gains: Vec<CMat> = channels.iter().zip(precoders).map(|(g, w)| w.ad_mul(g)).collect();
    Ok((0..l * k)
        .map(|n| {
            let (cell, user) = (n / k, n % k);
            let mut signal = 0.0;
            let mut interference = 0.0;
            for (i, gi) in gains.iter().enumerate() {
                for mm in 0..k {
                    let power = gi[(mm, n)].norm_sqr();
                    if i == cell && mm == user {
                        signal = power;
                    } else {
                        interference += power;
                    }
                }
            }
            (1.0 + p * signal / (1.0 + p * interference)).log2()
        })
        .collect())
}

/// Fractions `P(X < x)` for every grid point.
pub fn empirical_cdf(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empirical CDF of an empty sample".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("CDF grid must be ascending".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|&x| sorted.partition_point(|&s| s < x) as f64 / n)
        .collect())
}

/// Nearest-rank percentile: the `ceil(p/100 * n)`-th smallest sample.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("percentile of an empty sample".into()));
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::InvalidInput(format!("percentile {p} outside (0, 100)")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        f64::NAN
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    }
}

/// One user in one drop under one estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub drop: usize,
    pub cell: usize,
    pub user: usize,
    pub method: Method,
    pub t_ul: usize,
    pub angle_deg: f64,
    pub rate_mf: f64,
    pub rate_zf: f64,
    /// `||h_hat - h||^2 / M`.
    pub mse: f64,
}

/// A drop in which an estimator could not produce a result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRecord {
    pub drop: usize,
    pub method: Method,
    pub t_ul: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTable {
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<FailureRecord>,
}

impl MetricsTable {
    pub fn select(&self, method: Method, t_ul: usize) -> impl Iterator<Item = &MetricsRecord> {
        self.records
            .iter()
            .filter(move |r| r.method == method && r.t_ul == t_ul)
    }

    pub fn angles(&self, method: Method, t_ul: usize) -> Vec<f64> {
        self.select(method, t_ul).map(|r| r.angle_deg).collect()
    }

    pub fn rates_mf(&self, method: Method, t_ul: usize) -> Vec<f64> {
        self.select(method, t_ul).map(|r| r.rate_mf).collect()
    }

    pub fn rates_zf(&self, method: Method, t_ul: usize) -> Vec<f64> {
        self.select(method, t_ul).map(|r| r.rate_zf).collect()
    }

    pub fn failed_drops(&self, method: Method, t_ul: usize) -> usize {
        self.failures
            .iter()
            .filter(|f| f.method == method && f.t_ul == t_ul)
            .count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "drop,cell,user,method,T_ul,angle_deg,rate_mf,rate_zf,mse")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
                r.drop, r.cell, r.user, r.method, r.t_ul, r.angle_deg, r.rate_mf, r.rate_zf, r.mse
            )?;
        }
        Ok(())
    }
}
