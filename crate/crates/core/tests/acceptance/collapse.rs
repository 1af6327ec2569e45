//! Criteria 6 and 8: Gaussian collapse and the jump-to-diffusion limit.

use eventum_core::boundary_model::{diffusion_limit_compare, DiffusionLimitConfig};
use eventum_core::gaussian_filter::{explicit_mean, filter_output, riccati_stationary, solve_deviation, Forcing, GaussianPosterior};
use eventum_core::noise::sample_noise_path;
use eventum_core::quantum_grid::{GridSpec, SystemParams};
use eventum_core::sde_engine::{integrate_posterior, run_ensemble, IntegratorOptions, Scheme};
use eventum_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::common;
use super::Verdict;

fn composition_sweep() -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let u = rng.random_range(-2.0..2.0);
        let q = rng.random_range(-2.0..2.0);
        let v0 = rng.random_range(-2.0..2.0);
        let kappa = rng.random_range(0.1..3.0);
        let t = rng.random_range(0.0..10.0 / kappa);
        let z = solve_deviation(kappa, q, v0 - u, Forcing::Zero)?.z(t)?;
        worst = worst.max((explicit_mean(u, q, v0, kappa, t) - (u * t - q + z)).abs());
    }
    Ok((worst, 1000))
}

pub fn gaussian_collapse() -> Result<Verdict> {
    let (worst, sweep) = composition_sweep()?;

    // Long horizon: a wide, fine grid keeps high-momentum paths resolved.
    let r = common::reference_on(GridSpec::new(4000, -100.0, 100.0)?);
    let st = riccati_stationary(&r.params)?;
    let (dt, horizon) = (1e-3, 10.0 / st.kappa);
    let steps = (horizon / dt).round() as usize;
    let opts = IntegratorOptions { scheme: Scheme::SplitExponential, store_stride: None };
    let m0 = r.ops.moments(&r.psi0)?;
    let init = GaussianPosterior::coherent(m0.q, m0.p / r.params.m, m0.vqq.sqrt(), r.params.hbar);
    let width = m0.vqq.sqrt();
    let runs = run_ensemble(50, |i| {
        let path = sample_noise_path(601, i, dt, steps, 1)?;
        let grid = integrate_posterior(&r.psi0, &r.ops, &r.params, &path, opts)?;
        let oracle = filter_output(&r.params, &init, &grid.output_path())?;
        let sq: f64 = grid.q_mean.iter().zip(&oracle.states).map(|(a, b)| (a - b.q).powi(2)).sum();
        Ok((*grid.q_dispersion.last().unwrap(), sq, grid.q_mean.len()))
    })?;
    let within = runs.iter().filter(|(v, _, _)| (v / st.vqq - 1.0).abs() <= 0.05).count();
    let total: usize = runs.iter().map(|r| r.2).sum();
    let mean_rms = (runs.iter().map(|r| r.1).sum::<f64>() / total as f64).sqrt();
    let pass = worst <= 1e-12 && within * 5 >= 50 * 4 && mean_rms <= 0.05 * width;
    Ok(Verdict::new(
        pass,
        format!(
            "(a) {sweep}-point sweep max |q − (x + z)| = {worst:.2e} (≤ 1e-12); (b) {within}/50 dispersions within 5% of Vqq∞ = {:.4} at t = 10/κ (≥ 40); (c) grid vs Gaussian mean RMS = {mean_rms:.4} (≤ {:.3})",
            st.vqq,
            0.05 * width
        ),
    ))
}

pub fn jump_limit() -> Result<Verdict> {
    let params = SystemParams::reference();
    let st = riccati_stationary(&params)?;
    // A moving packet gives the ensemble-mean curve a scale of its own
    // (q̂ ≈ p0 t), so the relative distance is well posed.
    let cfg = DiffusionLimitConfig {
        grid: GridSpec::new(768, -48.0, 48.0)?,
        params,
        q0: 0.0,
        p0: 1.0,
        width: 1.0,
        nus: vec![1e2, 1e3, 1e4],
        dt_factor: 0.1,
        horizon: 5.0 / st.kappa,
        diffusion_dt: 1e-3,
        trajectories: 12,
        seed: 801,
    };
    let rep = diffusion_limit_compare(&cfg)?;
    let last = rep.per_nu.last().expect("three intensities");
    let pass = rep.mean_distance_decreasing && last.mean_rel <= 0.10;
    let curve: Vec<String> = rep
        .per_nu
        .iter()
        .map(|c| format!("ν={:.0e}: {:.4}", c.nu, c.mean_rms))
        .collect();
    Ok(Verdict::new(
        pass,
        format!(
            "mean-q̂ RMS distance {curve:?}, decreasing = {}; relative to the diffusion mean curve (RMS {:.3}) at ν = 1e4: {:.4} (≤ 0.10); in units of √Vqq∞: {:.4}; dispersion at t = 5/κ within {:.2}% of diffusion",
            rep.mean_distance_decreasing,
            last.diffusion_mean_magnitude,
            last.mean_rel,
            last.mean_rms / st.vqq.sqrt(),
            100.0 * last.dispersion_rel_err_end
        ),
    ))
}
