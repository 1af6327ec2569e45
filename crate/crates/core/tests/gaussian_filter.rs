mod common;

use std::sync::Arc;

use eventum_core::gaussian_filter::{
    explicit_mean, flow_covariance, integrate_gaussian_filter, riccati_stationary, solve_deviation, solve_deviation_on,
    Forcing, GaussianPosterior,
};
use eventum_core::noise::sample_noise_path;
use eventum_core::quantum_grid::{Potential, SystemParams};
use eventum_core::sde_engine::{integrate_posterior, IntegratorOptions};
use eventum_core::Error;
use proptest::prelude::*;

#[test]
fn constant_forcing_settles_on_particular_solution() {
    let k = 0.8;
    let c = 1.7;
    let s = solve_deviation(k, 0.0, 0.0, Forcing::Constant(-2.0 * k * k * c)).unwrap();
    assert!(!s.is_closed_form());
    let z = s.z(30.0 / k).unwrap();
    assert!((z - c).abs() < 1e-9, "z = {z}");
}

#[test]
fn numerical_branch_residual_is_small() {
    let k = 0.5;
    let g = Forcing::Function(Arc::new(|t: f64| 0.3 * (1.3 * t).sin() * (-0.1 * t).exp()));
    let s = solve_deviation_on(k, 0.4, -0.2, g, 20.0 / k).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=400 {
        let t = 20.0 / k * i as f64 / 400.0;
        worst = worst.max(s.residual(t).unwrap().abs());
    }
    assert!(worst <= 1e-8, "residual {worst}");
}

#[test]
fn closed_form_residual_vanishes() {
    let s = solve_deviation(1.1, -0.3, 2.0, Forcing::Zero).unwrap();
    assert!(s.is_closed_form());
    for t in [0.0, 0.5, 3.0, 12.0] {
        assert!(s.residual(t).unwrap().abs() < 1e-12);
    }
}

#[test]
fn nonpositive_kappa_is_rejected() {
    for k in [0.0, -1.0, f64::NAN] {
        assert!(matches!(solve_deviation(k, 1.0, 0.0, Forcing::Zero), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn explicit_mean_tends_to_input_trajectory() {
    let (u, q, v0, k) = (0.4, 1.5, -0.7, 0.9);
    assert_eq!(explicit_mean(u, q, v0, k, 0.0), 0.0);
    let t = 60.0 / k;
    assert!((explicit_mean(u, q, v0, k, t) - (u * t - q)).abs() < 1e-12);
}

#[test]
fn stationary_dispersion_scales_with_parameters() {
    let base = riccati_stationary(&SystemParams::new(1.0, 1.0, vec![1.0], Potential::Free).unwrap()).unwrap();
    let (hbar, m, l) = (2.5, 0.4, 0.3);
    let other = riccati_stationary(&SystemParams::new(hbar, m, vec![l], Potential::Free).unwrap()).unwrap();
    let predicted = base.vqq * (hbar / m).sqrt() / l;
    assert!((other.vqq - predicted).abs() <= 1e-12 * predicted);
    assert!((other.kappa - l * (hbar / m).sqrt()).abs() < 1e-14);
}

#[test]
fn stationary_point_is_attracting() {
    let params = SystemParams::reference();
    let s = riccati_stationary(&params).unwrap();
    let flow = flow_covariance(&params, [1.1 * s.vqq, s.vqp, s.vpp], 20.0 / s.kappa, 1e-3).unwrap();
    let end = flow.last().unwrap();
    assert!((end[0] - s.vqq).abs() <= 1e-3 * s.vqq, "Vqq {}", end[0]);
    assert!((end[2] - s.vpp).abs() <= 1e-3 * s.vpp, "Vpp {}", end[2]);
}

#[test]
fn no_measurement_has_no_stationary_point() {
    let params = SystemParams::new(1.0, 1.0, vec![0.0], Potential::Free).unwrap();
    assert!(matches!(riccati_stationary(&params), Err(Error::DegenerateInput(_))));
}

#[test]
fn grid_posterior_mean_tracks_gaussian_filter() {
    let r = common::reference();
    let dt = 1e-3;
    let path = sample_noise_path(61, 0, dt, 5000, 1).unwrap();
    let grid = integrate_posterior(&r.psi0, &r.ops, &r.params, &path, IntegratorOptions::default()).unwrap();
    let init = GaussianPosterior::coherent(0.0, 0.0, 1.0, r.params.hbar);
    let gauss = integrate_gaussian_filter(&r.params, &init, &path).unwrap();
    let n = grid.q_mean.len();
    let diff2: f64 = (0..n).map(|i| (grid.q_mean[i] - gauss.states[i].q).powi(2)).sum::<f64>() / n as f64;
    let scale2: f64 = grid.q_mean.iter().map(|q| q * q).sum::<f64>() / n as f64;
    let scale = scale2.sqrt().max(1.0);
    assert!(diff2.sqrt() <= 0.05 * scale, "rms diff {} vs scale {scale}", diff2.sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_flow_respects_heisenberg_floor(
        vqq in 0.2f64..4.0,
        corr in -0.9f64..0.9,
        excess in 1.0f64..3.0,
        lambda in 0.05f64..2.0,
    ) {
        let params = SystemParams::new(1.0, 1.0, vec![lambda], Potential::Free).unwrap();
        let vpp_min = 0.25 / (vqq * (1.0 - corr * corr));
        let vpp = excess * vpp_min;
        let vqp = corr * (vqq * vpp).sqrt();
        let flow = flow_covariance(&params, [vqq, vqp, vpp], 5.0, 1e-3).unwrap();
        for c in &flow {
            prop_assert!(c[0] >= 0.0 && c[2] >= 0.0);
            prop_assert!(c[0] * c[2] - c[1] * c[1] >= 0.25 * (1.0 - 1e-6));
        }
    }

    #[test]
    fn explicit_mean_matches_deviation_solution(
        u in -2.0f64..2.0, q in -2.0f64..2.0, v0 in -2.0f64..2.0, k in 0.1f64..3.0, t in 0.0f64..20.0,
    ) {
        let z = solve_deviation(k, q, v0 - u, Forcing::Zero).unwrap().z(t).unwrap();
        let x = u * t - q;
        prop_assert!((explicit_mean(u, q, v0, k, t) - (x + z)).abs() <= 1e-12);
    }

    #[test]
    fn free_spreading_is_quadratic(vqq in 0.3f64..3.0, vqp in -0.5f64..0.5, t in 0.0f64..4.0) {
        let params = SystemParams::new(1.0, 1.0, vec![0.0], Potential::Free).unwrap();
        let vpp = (0.25 + vqp * vqp) / vqq + 0.1;
        let flow = flow_covariance(&params, [vqq, vqp, vpp], t, 1e-3).unwrap();
        let end = flow.last().unwrap();
        let tt = (t / 1e-3).round() * 1e-3;
        let want = vqq + 2.0 * vqp * tt + vpp * tt * tt;
        prop_assert!((end[0] - want).abs() <= 1e-9 * want.max(1.0));
    }
}
