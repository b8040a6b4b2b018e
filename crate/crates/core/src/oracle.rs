//! Reference computations used to cross-check the estimators.
//!
//! Everything here is written directly from the model definitions, with
//! dense vectorized algebra or brute-force search, and shares no code path
//! with the estimators it checks beyond basic matrix types.

use nalgebra::DVector;
use rand::Rng;

use crate::estimators::SemiBlindProblem;
use crate::numerics::{
    complex_to_real, finite_diff_grad, lbfgs_maximize, max_relative_error, real_gradient, real_to_complex,
    OptimizerOptions,
};
use crate::scenario::PilotBook;
use crate::signal::cn01;
use crate::{CMat, Error, Result, C64};

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Conditional mean of the desired cell's channels given `Y_tr`, computed
/// on `vec(Y_tr) = sqrt(rho_tr) (conj(Psi) kron I_M) vec(H) + vec(N)` with
/// `vec(H) ~ CN(0, B kron I_M)` and an LU solve of the `M T_tr` system.
pub fn kronecker_mmse(y_tr: &CMat, pilots: &PilotBook, beta: &[f64], rho_tr: f64) -> Result<CMat> {
    if y_tr.ncols() != pilots.t_tr() || beta.len() != pilots.total_users() {
        return Err(Error::Dimension("observation, pilots and coefficients disagree".into()));
    }
    let phi = pilots.psi() * re(rho_tr.sqrt());
    kronecker_mmse_stacked(y_tr, &phi, beta, pilots.users_per_cell())
}

/// Conditional mean of the first `k` columns of `H` given
/// `Y = H Phi^H + N` with unit-variance noise, by the same vectorized route.
pub fn kronecker_mmse_stacked(y: &CMat, phi: &CMat, beta: &[f64], k: usize) -> Result<CMat> {
    let m = y.nrows();
    let t = phi.nrows();
    let n = phi.ncols();
    if y.ncols() != t || beta.len() != n || k > n {
        return Err(Error::Dimension("observation, pilots and coefficients disagree".into()));
    }
    // A[(tau, a), (u, b)] = conj(phi[tau, u]) delta_ab, column-major vec indices
    let a = CMat::from_fn(m * t, m * n, |row, col| {
        let (tau, ai) = (row / m, row % m);
        let (u, bi) = (col / m, col % m);
        if ai == bi {
            phi[(tau, u)].conj()
        } else {
            re(0.0)
        }
    });
    let prior = CMat::from_fn(m * n, m * n, |r, c| if r == c { re(beta[r / m]) } else { re(0.0) });
    let mut c_yy = &a * &prior * a.adjoint();
    for i in 0..m * t {
        c_yy[(i, i)] += re(1.0);
    }
    let c_hy = &prior * a.adjoint();
    let yv = DVector::from_iterator(m * t, y.iter().copied());
    let z = c_yy
        .lu()
        .solve(&yv)
        .ok_or_else(|| Error::RankDeficient("observation covariance".into()))?;
    let h = c_hy * z;
    Ok(CMat::from_fn(m, k, |r, c| h[c * m + r]))
}

/// Maximizer of the training and prior terms alone,
/// `-sum ||h_n||^2/beta_n - ||Y_tr - sqrt(rho_tr) H Psi^H||^2`, over all
/// `LK` users: `H = sqrt(rho_tr) Y_tr Psi (B^{-1} + rho_tr Psi^H Psi)^{-1}`.
pub fn joint_training_map(y_tr: &CMat, pilots: &PilotBook, beta: &[f64], rho_tr: f64) -> Result<CMat> {
    let psi = pilots.psi();
    let mut s = psi.adjoint() * psi * re(rho_tr);
    for (j, b) in beta.iter().enumerate() {
        s[(j, j)] += re(1.0 / b);
    }
    let rhs = (y_tr * psi * re(rho_tr.sqrt())).adjoint();
    // S is Hermitian, so H = (S^{-1} rhs)^H
    let sol = s
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::RankDeficient("joint training system".into()))?;
    Ok(sol.adjoint())
}

/// Blind MAP objective `l_ul(H) + l_pr(H)` from explicit inverses and an LU
/// determinant.
pub fn blind_objective(h: &CMat, y_ul: &CMat, beta: &[f64], rho_ul: f64) -> f64 {
    let n = h.ncols();
    let t = y_ul.ncols() as f64;
    let gram = h.adjoint() * h;
    let inv = (gram.clone() + CMat::identity(n, n) * re(1.0 / rho_ul))
        .try_inverse()
        .expect("shifted Gram matrix is invertible");
    let c = y_ul * y_ul.adjoint();
    let fit = (c * h * inv * h.adjoint()).trace().re;
    let det = (gram * re(rho_ul) + CMat::identity(n, n)).determinant().re;
    let prior: f64 = h.column_iter().zip(beta).map(|(col, b)| col.norm_squared() / b).sum();
    fit - t * det.ln() - prior
}

/// Best blind objective value found by `restarts` L-BFGS runs from random
/// starting points, using finite-difference gradients.
pub fn blind_numeric_max<R: Rng + ?Sized>(
    y_ul: &CMat,
    beta: &[f64],
    rho_ul: f64,
    restarts: usize,
    rng: &mut R,
) -> f64 {
    let m = y_ul.nrows();
    let n = beta.len();
    let f = |x: &[f64]| blind_objective(&real_to_complex(x, m, n).expect("fixed length"), y_ul, beta, rho_ul);
    let opts = OptimizerOptions {
        max_iters: 400,
        grad_tol: 1e-9,
        ..OptimizerOptions::default()
    };
    let mut best = f64::NEG_INFINITY;
    for r in 0..restarts {
        // spread the starting scale over two orders of magnitude
        let scale = 10f64.powf(r as f64 / restarts.max(1) as f64 * 2.0 - 1.0);
        let init = CMat::from_fn(m, n, |_, c| cn01(rng) * (beta[c].sqrt() * scale));
        let res = lbfgs_maximize(f, |x| finite_diff_grad(f, x, 1e-6), &complex_to_real(&init), &opts);
        if res.value.is_finite() {
            best = best.max(res.value);
        }
    }
    best
}

/// `d l / d xi^2` of the per-rank blind objective
/// `sigma^2 xi^2/(xi^2 + 1/rho) - T log(rho xi^2 + 1) - xi^2/beta`.
pub fn blind_xi_derivative(xi2: f64, sigma2: f64, beta: f64, rho: f64, t: f64) -> f64 {
    let d = xi2 + 1.0 / rho;
    sigma2 / rho / (d * d) - t / d - 1.0 / beta
}

/// Norm-wise relative error between the analytic semi-blind gradient and
/// central finite differences of the objective at `h`.
pub fn semi_blind_gradient_error(problem: &SemiBlindProblem, h: &CMat, eps: f64) -> Result<f64> {
    let (m, n) = h.shape();
    let exact = real_gradient(&problem.gradient(h)?);
    let f = |x: &[f64]| {
        problem
            .objective(&real_to_complex(x, m, n).expect("fixed length"))
            .unwrap_or(f64::NAN)
    };
    let approx = finite_diff_grad(f, &complex_to_real(h), eps);
    Ok(max_relative_error(&approx, &exact, 1e-12))
}

/// Mean squared error per entry of an estimate.
pub fn mse(estimate: &CMat, truth: &CMat) -> f64 {
    (estimate - truth).norm_squared() / truth.len().max(1) as f64
}

/// Outcome of one self-check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, value: f64, limit: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: value <= limit,
        detail: format!("{value:.3e} (limit {limit:.0e})"),
    }
}

fn shared_pilots(l: usize, k: usize, t: usize) -> Result<PilotBook> {
    let base = crate::scenario::dft_pilots(t, k);
    let mut psi = CMat::zeros(t, l * k);
    for i in 0..l {
        psi.columns_mut(i * k, k).copy_from(&base);
    }
    PilotBook::new(psi, k)
}

/// Runs the estimator cross-checks on small random instances.
pub fn self_check(seed: u64) -> Result<Vec<CheckOutcome>> {
    use crate::estimators::{blind_map_estimate, ls_estimate, train_map_estimate};
    use crate::signal::{cn_matrix, draw_channels_from_betas, synth_training_scaled, uplink_with_symbols};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let (m, l, k, t_ul, t_tr) = (6, 2, 2, 8, 4);
    let pilots = shared_pilots(l, k, t_tr)?;
    let beta: Vec<f64> = (0..l * k).map(|_| rng.random_range(0.2..2.0)).collect();
    let ch = draw_channels_from_betas(&beta, k, m, &mut rng);
    let x = cn_matrix(t_ul, l * k, &mut rng);
    let y_ul = uplink_with_symbols(&ch.h, &x, 1.0, 1.0, &mut rng);
    let y_tr = synth_training_scaled(&ch.h, t_tr as f64, &pilots, 1.0, &mut rng)?;

    let problem = SemiBlindProblem::new(&y_ul, &y_tr, &pilots, &beta, 1.0, t_tr as f64)?;
    let h = cn_matrix(m, l * k, &mut rng);
    out.push(outcome("semi-blind gradient vs finite differences", semi_blind_gradient_error(&problem, &h, 1e-6)?, 1e-5));

    let map = train_map_estimate(&y_tr, &pilots, &beta, t_tr as f64)?;
    let kron = kronecker_mmse(&y_tr, &pilots, &beta, t_tr as f64)?;
    out.push(outcome("train-MAP vs joint Gaussian conditional mean", (&map - &kron).norm() / kron.norm(), 1e-8));

    let noiseless = synth_training_scaled(&ch.h, t_tr as f64, &pilots, 0.0, &mut rng)?;
    let ls = ls_estimate(&noiseless, &pilots.block(0), t_tr as f64)?;
    let sum = ch.cell_block(0) + ch.cell_block(1);
    out.push(outcome("LS equals the sum over contaminating cells", (&ls - &sum).norm() / sum.norm(), 1e-12));

    let y_blind = cn_matrix(m, 12, &mut rng) * C64::new(2.0, 0.0);
    let b2 = [1.0, 0.4];
    let closed = blind_map_estimate(&y_blind, &b2, 1.0)?;
    let closed_value = blind_objective(&closed.h_hat, &y_blind, &b2, 1.0);
    let numeric = blind_numeric_max(&y_blind, &b2, 1.0, 5, &mut rng);
    out.push(outcome("blind closed form vs numeric search (shortfall)", (numeric - closed_value).max(0.0), 1e-6));

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b: f64 = rng.random_range(0.1..10.0);
        let rho: f64 = rng.random_range(0.1..10.0);
        let t: usize = rng.random_range(1..200);
        let s2 = (t as f64 + 1.0 / (b * rho)) * rng.random_range(1.01..5.0);
        let perm = crate::estimators::assign_permutation(&[b]);
        let xi = crate::estimators::blind_singular_values(&[s2.sqrt()], &[b], &perm, rho, t)?[0];
        worst = worst.max(blind_xi_derivative(xi * xi, s2, b, rho, t as f64).abs());
    }
    out.push(outcome("blind singular values are stationary", worst, 1e-9));
    Ok(out)
}
