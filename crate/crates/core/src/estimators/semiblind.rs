//! Semi-blind MAP estimation: joint maximization of the training, prior and
//! uplink-data log-likelihoods over all `LK` channel vectors.

use super::{EstimateFlag, EstimateSet, Method};
use crate::numerics::{cholesky, complex_to_real, lbfgs_maximize_with, real_gradient, real_to_complex, OptimizerOptions};
use crate::scenario::PilotBook;
use crate::{CMat, Error, Result, C64};

/// Precomputed data of the semi-blind objective
/// `l_ul(H) + l_pr(H) + l_tr(H)`.
#[derive(Clone, Debug)]
pub struct SemiBlindProblem {
    /// `Y_ul Y_ul^H`.
    cov: CMat,
    t_ul: usize,
    y_tr: CMat,
    psi: CMat,
    beta: Vec<f64>,
    rho_ul: f64,
    rho_tr: f64,
}

impl SemiBlindProblem {
    pub fn new(
        y_ul: &CMat,
        y_tr: &CMat,
        pilots: &PilotBook,
        beta: &[f64],
        rho_ul: f64,
        rho_tr: f64,
    ) -> Result<Self> {
        let m = y_tr.nrows();
        if y_ul.nrows() != m {
            return Err(Error::Dimension(format!(
                "Y_ul has {} rows, Y_tr has {m}",
                y_ul.nrows()
            )));
        }
        if y_tr.ncols() != pilots.t_tr() || beta.len() != pilots.total_users() {
            return Err(Error::Dimension(format!(
                "Y_tr is {}x{}, pilots are {}x{}, {} coefficients",
                m,
                y_tr.ncols(),
                pilots.t_tr(),
                pilots.total_users(),
                beta.len()
            )));
        }
        if beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput("slow-fading coefficients must be positive".into()));
        }
        Ok(Self {
            cov: y_ul * y_ul.adjoint(),
            t_ul: y_ul.ncols(),
            y_tr: y_tr.clone(),
            psi: pilots.psi().clone(),
            beta: beta.to_vec(),
            rho_ul,
            rho_tr,
        })
    }

    pub fn antennas(&self) -> usize {
        self.y_tr.nrows()
    }

    pub fn total_users(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn check_shape(&self, h: &CMat) -> Result<()> {
        if h.shape() != (self.antennas(), self.total_users()) {
            return Err(Error::Dimension(format!(
                "channel matrix is {}x{}, expected {}x{}",
                h.nrows(),
                h.ncols(),
                self.antennas(),
                self.total_users()
            )));
        }
        if !h.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("semi-blind iterate"));
        }
        Ok(())
    }

    pub fn objective(&self, h: &CMat) -> Result<f64> {
        self.evaluate(h, false).map(|(f, _)| f)
    }

    /// Conjugate derivative `d l / d H*`.
    pub fn gradient(&self, h: &CMat) -> Result<CMat> {
        self.evaluate(h, true).map(|(_, g)| g.expect("gradient requested"))
    }

    pub fn objective_and_gradient(&self, h: &CMat) -> Result<(f64, CMat)> {
        self.evaluate(h, true).map(|(f, g)| (f, g.expect("gradient requested")))
    }

    fn evaluate(&self, h: &CMat, with_grad: bool) -> Result<(f64, Option<CMat>)> {
        self.check_shape(h)?;
        let n = self.total_users();
        let t_ul = self.t_ul as f64;
        let gram = h.ad_mul(h);

        // l_ul = tr[C H (H^H H + I/rho)^{-1} H^H] - T log det(rho H^H H + I)
        let mut shifted = gram.clone();
        let mut scaled = gram * C64::new(self.rho_ul, 0.0);
        for j in 0..n {
            shifted[(j, j)] += C64::new(1.0 / self.rho_ul, 0.0);
            scaled[(j, j)] += C64::new(1.0, 0.0);
        }
        let log_det = cholesky(&scaled)?.log_det();
        // G = H (H^H H + I/rho)^{-1}
        let g = cholesky(&shifted)?.solve(&h.adjoint())?.adjoint();
        let cg = &self.cov * &g;
        let data_fit: f64 = h.iter().zip(cg.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        let l_ul = data_fit - t_ul * log_det;

        let l_pr: f64 = -h
            .column_iter()
            .zip(&self.beta)
            .map(|(col, b)| col.norm_squared() / b)
            .sum::<f64>();

        let sqrt_tr = self.rho_tr.sqrt();
        let resid = &self.y_tr - h * self.psi.adjoint() * C64::new(sqrt_tr, 0.0);
        let l_tr = -resid.norm_squared();

        let value = l_ul + l_pr + l_tr;
        if !value.is_finite() {
            return Err(Error::NonFinite("semi-blind objective"));
        }
        if !with_grad {
            return Ok((value, None));
        }

        // (I - G H^H) C G - T G
        let hcg = h.ad_mul(&cg);
        let mut grad = &cg - &g * hcg - &g * C64::new(t_ul, 0.0);
        // -H B^{-1}
        for ((mut gcol, hcol), b) in grad.column_iter_mut().zip(h.column_iter()).zip(&self.beta) {
            gcol.axpy(C64::new(-1.0 / b, 0.0), &hcol, C64::new(1.0, 0.0));
        }
        // sqrt(rho_tr) (Y_tr - sqrt(rho_tr) H Psi^H) Psi
        grad += resid * &self.psi * C64::new(sqrt_tr, 0.0);
        Ok((value, Some(grad)))
    }
}

/// Semi-blind objective evaluated from raw observations.
pub fn semi_blind_objective(
    h: &CMat,
    y_ul: &CMat,
    y_tr: &CMat,
    pilots: &PilotBook,
    beta: &[f64],
    rho_ul: f64,
    rho_tr: f64,
) -> Result<f64> {
    SemiBlindProblem::new(y_ul, y_tr, pilots, beta, rho_ul, rho_tr)?.objective(h)
}

/// Conjugate derivative of [`semi_blind_objective`].
pub fn semi_blind_gradient(
    h: &CMat,
    y_ul: &CMat,
    y_tr: &CMat,
    pilots: &PilotBook,
    beta: &[f64],
    rho_ul: f64,
    rho_tr: f64,
) -> Result<CMat> {
    SemiBlindProblem::new(y_ul, y_tr, pilots, beta, rho_ul, rho_tr)?.gradient(h)
}

/// Runs L-BFGS on the semi-blind objective from `init`.
pub fn semi_blind_estimate(init: &CMat, problem: &SemiBlindProblem, opts: &OptimizerOptions) -> Result<EstimateSet> {
    semi_blind_estimate_observed(init, problem, opts, |_, _| {})
}

/// Like [`semi_blind_estimate`]; `observer(k, H_k)` sees the iterate after
/// every iteration, starting with `k = 0`.
///
/// The optimizer works on `A = H B^{-1/2}`, which equalizes the prior
/// curvature across users whose slow-fading coefficients differ by orders of
/// magnitude. Objective values and the returned trace are unaffected.
pub fn semi_blind_estimate_observed<O>(
    init: &CMat,
    problem: &SemiBlindProblem,
    opts: &OptimizerOptions,
    mut observer: O,
) -> Result<EstimateSet>
where
    O: FnMut(usize, &CMat),
{
    opts.validate()?;
    problem.check_shape(init)?;
    let (m, n) = init.shape();
    let scale: Vec<f64> = problem.beta.iter().map(|b| b.sqrt()).collect();
    let to_channel = |x: &[f64]| -> CMat {
        let mut h = real_to_complex(x, m, n).expect("length fixed by construction");
        for (mut col, s) in h.column_iter_mut().zip(&scale) {
            col.scale_mut(*s);
        }
        h
    };
    let mut whitened = init.clone();
    for (mut col, s) in whitened.column_iter_mut().zip(&scale) {
        col.unscale_mut(*s);
    }
    let x0 = complex_to_real(&whitened);

    let res = lbfgs_maximize_with(
        |x, g| {
            let h = to_channel(x);
            match problem.objective_and_gradient(&h) {
                Ok((f, mut d)) => {
                    for (mut col, s) in d.column_iter_mut().zip(&scale) {
                        col.scale_mut(*s);
                    }
                    g.copy_from_slice(&real_gradient(&d));
                    f
                }
                Err(_) => f64::NAN,
            }
        },
        &x0,
        opts,
        |k, x, _| observer(k, &to_channel(x)),
    );

    let mut est = EstimateSet::new(Method::SemiBlind, to_channel(&res.x));
    est.trace = Some(res.trace);
    if res.status.is_failure() {
        est.flags.push(EstimateFlag::Optimizer(res.status));
    }
    Ok(est)
}
