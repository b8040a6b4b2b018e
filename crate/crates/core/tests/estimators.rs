mod common;

use chanest::estimators::{
    blind_map_estimate, genie_bound_estimate, ls_all, semi_blind_estimate, train_map_estimate, SemiBlindProblem,
};
use chanest::numerics::{frobenius_norm, OptimizerOptions};
use chanest::oracle::{joint_training_map, kronecker_mmse_stacked, mse};
use chanest::signal::{cn_matrix, draw_channels_from_betas, synth_training_scaled, uplink_with_symbols};
use chanest::{CMat, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{log_uniform, random_pilots, shared_pilots};

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn tight() -> OptimizerOptions {
    OptimizerOptions {
        max_iters: 5000,
        grad_tol: 1e-11,
        ..OptimizerOptions::default()
    }
}

#[test]
fn semi_blind_without_data_is_joint_training_map() {
    let (m, l, k, t_tr, rho_tr) = (5, 2, 2, 3, 6.0);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pilots = random_pilots(l, k, t_tr, &mut rng);
        let beta = log_uniform(l * k, 0.1, 2.0, &mut rng);
        let ch = draw_channels_from_betas(&beta, k, m, &mut rng);
        let y_tr = synth_training_scaled(&ch.h, rho_tr, &pilots, 1.0, &mut rng).unwrap();
        let y_ul = CMat::zeros(m, 0);
        let problem = SemiBlindProblem::new(&y_ul, &y_tr, &pilots, &beta, 1.0, rho_tr).unwrap();
        let init = ls_all(&y_tr, &pilots, rho_tr).unwrap();
        let est = semi_blind_estimate(&init, &problem, &tight()).unwrap();
        let oracle = joint_training_map(&y_tr, &pilots, &beta, rho_tr).unwrap();
        let rel = frobenius_norm(&(&est.h_hat - &oracle)) / frobenius_norm(&oracle);
        assert!(rel < 1e-6, "seed {seed}: relative deviation {rel}");
    }
}

#[test]
fn semi_blind_ascends_from_its_start() {
    let (m, l, k, t_ul, t_tr) = (16, 3, 2, 40, 2);
    let rho_ul = 3.0;
    let rho_tr = rho_ul * t_tr as f64;
    let pilots = shared_pilots(l, k, t_tr);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let beta = log_uniform(l * k, 0.01, 1.0, &mut rng);
        let ch = draw_channels_from_betas(&beta, k, m, &mut rng);
        let x = cn_matrix(t_ul, l * k, &mut rng);
        let y_ul = uplink_with_symbols(&ch.h, &x, rho_ul, 1.0, &mut rng);
        let y_tr = synth_training_scaled(&ch.h, rho_tr, &pilots, 1.0, &mut rng).unwrap();
        let problem = SemiBlindProblem::new(&y_ul, &y_tr, &pilots, &beta, rho_ul, rho_tr).unwrap();
        let init = ls_all(&y_tr, &pilots, rho_tr).unwrap();
        let est = semi_blind_estimate(&init, &problem, &OptimizerOptions::default()).unwrap();
        let trace = est.trace.unwrap();
        let start = problem.objective(&init).unwrap();
        assert!((trace[0] - start).abs() <= 1e-12 * start.abs());
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(problem.objective(&est.h_hat).unwrap() >= start);
    }
}

#[test]
fn objective_prefers_true_channel_over_zero_at_high_snr() {
    let (m, l, k, t_ul, t_tr, rho_ul) = (32, 2, 2, 20, 2, 10.0);
    let rho_tr = rho_ul * t_tr as f64;
    let pilots = shared_pilots(l, k, t_tr);
    let mut wins = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = log_uniform(l * k, 0.1, 1.0, &mut rng);
        let ch = draw_channels_from_betas(&beta, k, m, &mut rng);
        let x = cn_matrix(t_ul, l * k, &mut rng);
        let y_ul = uplink_with_symbols(&ch.h, &x, rho_ul, 1.0, &mut rng);
        let y_tr = synth_training_scaled(&ch.h, rho_tr, &pilots, 1.0, &mut rng).unwrap();
        let problem = SemiBlindProblem::new(&y_ul, &y_tr, &pilots, &beta, rho_ul, rho_tr).unwrap();
        let at_truth = problem.objective(&ch.h).unwrap();
        let at_zero = problem.objective(&CMat::zeros(m, l * k)).unwrap();
        assert!((at_zero + y_tr.norm_squared()).abs() <= 1e-9 * y_tr.norm_squared());
        if at_truth >= at_zero {
            wins += 1;
        }
    }
    assert!(wins >= 95, "true channel preferred on {wins}/100 seeds");
}

#[test]
fn genie_matches_vectorized_oracle() {
    let (m, l, k, t_tr, t_ul) = (3, 2, 1, 2, 3);
    let (rho_tr, rho_ul) = (4.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pilots = random_pilots(l, k, t_tr, &mut rng);
    let beta = log_uniform(l * k, 0.2, 2.0, &mut rng);
    let ch = draw_channels_from_betas(&beta, k, m, &mut rng);
    let x = cn_matrix(t_ul, l * k, &mut rng);
    let y_ul = uplink_with_symbols(&ch.h, &x, rho_ul, 1.0, &mut rng);
    let y_tr = synth_training_scaled(&ch.h, rho_tr, &pilots, 1.0, &mut rng).unwrap();
    let genie = genie_bound_estimate(&y_tr, &y_ul, &x, &pilots, &beta, rho_tr, rho_ul).unwrap();

    let mut y = CMat::zeros(m, t_tr + t_ul);
    y.columns_mut(0, t_tr).copy_from(&y_tr);
    y.columns_mut(t_tr, t_ul).copy_from(&y_ul);
    let mut phi = CMat::zeros(t_tr + t_ul, l * k);
    phi.rows_mut(0, t_tr).copy_from(&(pilots.psi() * re(rho_tr.sqrt())));
    phi.rows_mut(t_tr, t_ul).copy_from(&(&x * re(rho_ul.sqrt())));
    let oracle = kronecker_mmse_stacked(&y, &phi, &beta, k).unwrap();
    let rel = frobenius_norm(&(&genie - &oracle)) / frobenius_norm(&oracle);
    assert!(rel < 1e-10, "relative deviation {rel}");
}

#[test]
fn genie_beats_training_on_average() {
    let (m, l, k, t_tr, t_ul) = (8, 3, 2, 2, 10);
    let rho_ul = 2.0;
    let rho_tr = rho_ul * t_tr as f64;
    let pilots = shared_pilots(l, k, t_tr);
    let (mut genie_mse, mut train_mse) = (0.0, 0.0);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = log_uniform(l * k, 0.05, 1.0, &mut rng);
        let ch = draw_channels_from_betas(&beta, k, m, &mut rng);
        let x = cn_matrix(t_ul, l * k, &mut rng);
        let y_ul = uplink_with_symbols(&ch.h, &x, rho_ul, 1.0, &mut rng);
        let y_tr = synth_training_scaled(&ch.h, rho_tr, &pilots, 1.0, &mut rng).unwrap();
        let truth = ch.cell_block(0);
        let genie = genie_bound_estimate(&y_tr, &y_ul, &x, &pilots, &beta, rho_tr, rho_ul).unwrap();
        let train = train_map_estimate(&y_tr, &pilots, &beta, rho_tr).unwrap();
        genie_mse += mse(&genie, &truth);
        train_mse += mse(&train, &truth);
    }
    assert!(genie_mse <= train_mse, "genie {genie_mse} vs train-MAP {train_mse}");
}

#[test]
fn blind_estimate_ignores_global_phase() {
    let (m, n, t_ul, rho) = (10, 4, 30, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let beta = log_uniform(n, 0.1, 1.0, &mut rng);
    let ch = draw_channels_from_betas(&beta, 1, m, &mut rng);
    let x = cn_matrix(t_ul, n, &mut rng);
    let y = uplink_with_symbols(&ch.h, &x, rho, 1.0, &mut rng);
    let base = blind_map_estimate(&y, &beta, rho).unwrap().h_hat;
    for theta in [0.3, 1.7, -2.9] {
        let rotated = &y * C64::from_polar(1.0, theta);
        let est = blind_map_estimate(&rotated, &beta, rho).unwrap().h_hat;
        let rel = frobenius_norm(&(&est - &base)) / frobenius_norm(&base);
        assert!(rel < 1e-12, "theta {theta}: relative change {rel}");
    }
}

#[test]
fn blind_estimate_at_very_low_snr_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let beta = [1e-3, 2e-3];
    let ch = draw_channels_from_betas(&beta, 1, 6, &mut rng);
    let x = cn_matrix(3, 2, &mut rng);
    let y = uplink_with_symbols(&ch.h, &x, 1e-2, 1.0, &mut rng);
    let est = blind_map_estimate(&y, &beta, 1e-2).unwrap();
    assert!(est.is_finite());
    assert_eq!(est.h_hat.norm_squared(), 0.0);
}
