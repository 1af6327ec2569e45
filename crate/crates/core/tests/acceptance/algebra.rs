//! Criteria 1, 2 and 9: exact algebra, generator unitarity, uncertainty product.

use eventum_core::boundary_model::{build_step_unitary, MeasurementBasis, ProbeSpec, StepGenerator};
use eventum_core::ito_algebra::{basis_differential, epsilon_noise_square, BasisKind, ItoMatrix, StochasticGenerator};
use eventum_core::quantum_grid::{Potential, SystemParams};
use eventum_core::{Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::common;
use super::Verdict;

/// Coefficients over (dt, d_−, d⁺, d).
type Combo = [i64; 4];

fn combo(kind: BasisKind) -> Combo {
    match kind {
        BasisKind::Time => [1, 0, 0, 0],
        BasisKind::Wiener => [0, 1, 1, 0],
        BasisKind::Poisson => [0, 1, 1, 1],
        BasisKind::Annihilate => [0, 1, 0, 0],
        BasisKind::Create => [0, 0, 1, 0],
        BasisKind::Count => [0, 0, 0, 1],
    }
}

/// Vacuum product rules; every pair not listed vanishes.
fn hp(a: usize, b: usize) -> Combo {
    match (a, b) {
        (1, 2) => [1, 0, 0, 0],
        (1, 3) => [0, 1, 0, 0],
        (3, 2) => [0, 0, 1, 0],
        (3, 3) => [0, 0, 0, 1],
        _ => [0; 4],
    }
}

fn hp_product(x: Combo, y: Combo) -> Combo {
    let mut out = [0; 4];
    for a in 0..4 {
        for b in 0..4 {
            let p = hp(a, b);
            for c in 0..4 {
                out[c] += x[a] * y[b] * p[c];
            }
        }
    }
    out
}

/// Displayed 3×3 representatives in index order (−, ∘, +).
fn displayed(c: Combo) -> [[i64; 3]; 3] {
    [[0, c[1], c[0]], [0, c[3], c[2]], [0, 0, 0]]
}

fn to_matrix(m: [[i64; 3]; 3]) -> Result<ItoMatrix> {
    ItoMatrix::from_integers(1, &[&m[0], &m[1], &m[2]])
}

pub fn ito_table() -> Result<Verdict> {
    let mut failures = Vec::new();
    let mut checked = 0;
    for a in BasisKind::ALL {
        let ma = basis_differential(a, 1)?;
        if ma != to_matrix(displayed(combo(a)))? {
            failures.push(format!("{a} representative"));
        }
        for b in BasisKind::ALL {
            let got = ma.mul(&basis_differential(b, 1)?)?;
            let want = to_matrix(displayed(hp_product(combo(a), combo(b))))?;
            checked += 1;
            if got != want {
                failures.push(format!("{a}·{b}"));
            }
        }
    }
    let w = basis_differential(BasisKind::Wiener, 1)?;
    let m = basis_differential(BasisKind::Poisson, 1)?;
    let t = basis_differential(BasisKind::Time, 1)?;
    let dwdm = to_matrix([[0, 1, 1], [0, 0, 0], [0, 0, 0]])?;
    let dmdw = to_matrix([[0, 0, 1], [0, 0, 1], [0, 0, 0]])?;
    if w.mul(&m)? != dwdm || m.mul(&w)? != dmdw {
        failures.push("displayed d_w d_m / d_m d_w".into());
    }
    let combos = [
        (w.mul(&m)?.sub(&t)?, BasisKind::Annihilate),
        (m.mul(&w)?.sub(&t)?, BasisKind::Create),
        (m.sub(&w)?, BasisKind::Count),
    ];
    for (lhs, kind) in combos {
        if lhs != basis_differential(kind, 1)? {
            failures.push(format!("combination for {kind}"));
        }
    }
    for eps in [0.0, 0.5, 1.0, 2.0] {
        let r = epsilon_noise_square(eps)?;
        if !r.holds || r.lhs != r.rhs {
            failures.push(format!("epsilon identity at {eps}"));
        }
    }
    Ok(Verdict::new(
        failures.is_empty(),
        format!("{checked} products, 3 combinations, 4 epsilon cases; mismatches: {failures:?}"),
    ))
}

pub fn pseudo_unitarity() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_u, mut worst_norm, mut worst_diff) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..100 {
        let n = rng.random_range(2..=6);
        let nu = rng.random_range(0.5..4.0);
        let hbar = rng.random_range(0.5..2.0);
        let g = common::random_pseudo_unitary(&mut rng, n, nu, hbar);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let phi = vec![C64::from_polar(1.0, phase)];
        let s = g.g_to_s(&phi)?;
        worst_norm = worst_norm.max(s.normalization_residual());
        let probe = ProbeSpec {
            levels: 2,
            phi,
            nu,
            basis: if case % 2 == 0 { MeasurementBasis::Number } else { MeasurementBasis::Quadrature },
        };
        let u = build_step_unitary(&StepGenerator::Jump(g), 1e-2, &probe)?;
        worst_u = worst_u.max(u.unitarity_defect());

        let h = common::random_hermitian(&mut rng, n, 1.0);
        let l = common::random_matrix(&mut rng, n, 1.0);
        let gen = StochasticGenerator::diffusive(&h, &[l], hbar)?;
        worst_norm = worst_norm.max(gen.normalization_residual());
        let d = StepGenerator::Diffusive { generator: gen, hbar };
        let u = build_step_unitary(&d, 1e-2, &ProbeSpec::diffusive(MeasurementBasis::Quadrature))?;
        worst_diff = worst_diff.max(u.unitarity_defect());
    }
    let pass = worst_u <= 1e-12 && worst_diff <= 1e-12 && worst_norm <= 1e-10;
    Ok(Verdict::new(
        pass,
        format!(
            "100 boundary + 100 diffusive generators: max ‖U†U−I‖ = {worst_u:.2e} / {worst_diff:.2e} (≤ 1e-12), max ‖K+K†−L†L‖ = {worst_norm:.2e} (≤ 1e-10)"
        ),
    ))
}

pub fn uncertainty_product() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let hbar = 10f64.powf(rng.random_range(-6.0..6.0));
        let m = 10f64.powf(rng.random_range(-6.0..6.0));
        let lambda = 10f64.powf(rng.random_range(-6.0..6.0));
        let p = SystemParams::new(hbar, m, vec![lambda], Potential::Free)?;
        let rel = (p.sigma_e(0) * p.sigma_f(0) / (0.5 * hbar) - 1.0).abs();
        worst = worst.max(rel);
    }
    Ok(Verdict::new(worst <= 1e-15, format!("10^4 samples over 12 decades each: max relative error {worst:.2e} (≤ 1e-15)")))
}
