//! Criteria 3, 4, 5 and 7: linear/posterior state diffusion on the reference system.

use eventum_core::linalg::trace_norm_hermitian;
use eventum_core::master_equation::{integrate_lindblad, DensityMatrix, LindbladGenerator};
use eventum_core::noise::sample_noise_path;
use eventum_core::quantum_grid::gaussian_packet;
use eventum_core::sde_engine::{
    ensemble_density, integrate_linear, integrate_posterior, run_ensemble, IntegratorOptions, TrajectoryRecord,
};
use eventum_core::Result;

use super::common;
use super::Verdict;

const DT: f64 = 1e-3;
const STEPS: usize = 1000;
const N: usize = 2000;

fn linear_ensemble(seed: u64, count: usize, q0: f64) -> Result<Vec<TrajectoryRecord>> {
    let r = common::reference();
    let psi0 = gaussian_packet(&r.grid, q0, 0.0, 1.0, r.params.hbar)?;
    run_ensemble(count, |i| {
        let path = sample_noise_path(seed, i, DT, STEPS, 1)?;
        integrate_linear(&psi0, &r.ops, &r.params, &path, IntegratorOptions::default())
    })
}

pub fn isometry() -> Result<Verdict> {
    let ens = linear_ensemble(301, N, 0.0)?;
    let n2: Vec<f64> = ens.iter().map(|r| *r.norms_sq.last().unwrap()).collect();
    let mean = n2.iter().sum::<f64>() / N as f64;
    let sd = (n2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (N - 1) as f64).sqrt();
    let se = sd / (N as f64).sqrt();
    let bound = 3.0 * se + 5.0 * DT;
    let dev = (mean - 1.0).abs();
    Ok(Verdict::new(
        dev <= bound,
        format!("N = {N}: mean ‖ψ(1)‖² = {mean:.5}, |mean − 1| = {dev:.4} ≤ 3·SE + 5·dt = {bound:.4}"),
    ))
}

pub fn unraveling() -> Result<Verdict> {
    let r = common::reference();
    let ens = linear_ensemble(401, N, 0.0)?;
    let rho = ensemble_density(&ens, &[1.0])?;
    let gen = LindbladGenerator::position_measurement(&r.ops, &r.params)?;
    let lt = integrate_lindblad(&DensityMatrix::from_pure(&r.psi0), &gen, 1.0, DT, STEPS)?;
    let exact = &lt.states.last().expect("final state").rho;
    let dist = trace_norm_hermitian(&(&rho[0].rho - exact));
    Ok(Verdict::new(
        dist <= 0.05,
        format!("N = {N}: ‖ρ_ens(1) − ρ_Lindblad(1)‖₁ = {dist:.4} (≤ 0.05), ensemble trace {:.4}", rho[0].trace),
    ))
}

/// Final-state discrepancy between the normalized linear solution and the
/// posterior driven by its innovation, on a path coarsened to `dt`.
fn consistency_error(fine_dt: f64, factors: &[usize], paths: usize) -> Result<Vec<f64>> {
    let r = common::reference();
    let steps = (1.0 / fine_dt).round() as usize;
    let opts = IntegratorOptions::default();
    let per_path = run_ensemble(paths, |i| {
        let fine = sample_noise_path(501, i, fine_dt, steps, 1)?;
        factors
            .iter()
            .map(|f| {
                let path = fine.coarsen(*f)?;
                let lin = integrate_linear(&r.psi0, &r.ops, &r.params, &path, opts)?;
                let post = integrate_posterior(&r.psi0, &r.ops, &r.params, &lin.innovation_path(), opts)?;
                Ok(lin.final_state().normalized()?.distance(post.final_state()))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..factors.len()).map(|j| common::rms(per_path.iter().map(|v| v[j]))).collect())
}

pub fn strong_order() -> Result<Verdict> {
    // dt = 1e-3, 5e-4, 2.5e-4, 1.25e-4 from one fine path per sample.
    let errs = consistency_error(1.25e-4, &[8, 4, 2, 1], 20)?;
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let ratio = (errs[0] / errs[3]).powf(1.0 / 3.0);
    Ok(Verdict::new(
        (1.2..=1.7).contains(&ratio),
        format!(
            "20 paths, errors {:?} at dt = 1e-3..1.25e-4; per-halving ratios {:?}; mean ratio {ratio:.3} in [1.2, 1.7]",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    ))
}

/// Weighted ratio estimate `Σ w x / Σ w` and its standard error, treating
/// trajectories as independent units.
fn weighted_mean(w: &[f64], x: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let m = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let var: f64 = w.iter().zip(x).map(|(a, b)| (a * (b - m)).powi(2)).sum();
    (m, var.sqrt() / sw)
}

pub fn innovations() -> Result<Verdict> {
    // Output measure: reference Wiener paths reweighted by ‖ψ(T)‖². The
    // off-centre start makes the unweighted mean visibly nonzero.
    let ens = linear_ensemble(701, 200, 2.0)?;
    let w: Vec<f64> = ens.iter().map(|r| *r.norms_sq.last().unwrap()).collect();
    let s = STEPS as f64;
    let mean_i: Vec<f64> = ens.iter().map(|r| r.dwt.iter().sum::<f64>() / s).collect();
    let sq_i: Vec<f64> = ens.iter().map(|r| r.dwt.iter().map(|v| v * v).sum::<f64>() / s).collect();
    let (m, se_m) = weighted_mean(&w, &mean_i);
    let (v, se_v) = weighted_mean(&w, &sq_i);
    let (m_ref, _) = weighted_mean(&vec![1.0; w.len()], &mean_i);
    let pass = m.abs() <= 3.0 * se_m && (v - DT).abs() <= 3.0 * se_v;
    Ok(Verdict::new(
        pass,
        format!(
            "200 × 1000 increments: mean {m:.3e} (3σ = {:.3e}; unweighted {m_ref:.3e}), mean square / dt = {:.4} (3σ = {:.4})",
            3.0 * se_m,
            v / DT,
            3.0 * se_v / DT
        ),
    ))
}
