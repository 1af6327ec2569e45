//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use eventum_core::ito_algebra::BoundaryGenerator;
use eventum_core::quantum_grid::{build_operators, gaussian_packet, GridSpec, OperatorSet, SystemParams, WaveFunction};
use eventum_core::{CMatrix, C64};
use rand::Rng;

pub struct Reference {
    pub grid: GridSpec,
    pub params: SystemParams,
    pub ops: OperatorSet,
    pub psi0: WaveFunction,
}

/// ħ = m = 1, λ = 0.5, n = 128 on [−10, 10], unit-width packet at rest.
pub fn reference() -> Reference {
    reference_on(GridSpec::new(128, -10.0, 10.0).unwrap())
}

pub fn reference_on(grid: GridSpec) -> Reference {
    let params = SystemParams::reference();
    let ops = build_operators(&grid, &params).unwrap();
    let psi0 = gaussian_packet(&grid, 0.0, 0.0, 1.0, params.hbar).unwrap();
    Reference { grid, params, ops, psi0 }
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMatrix {
    let a = random_matrix(rng, n, scale);
    (&a + a.adjoint()).scale(0.5)
}

pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let h = random_hermitian(rng, n, 2.0);
    h.map(|v| v * C64::new(0.0, 1.0)).exp()
}

/// One-channel boundary generator satisfying the pseudo-unitarity constraints
/// by construction: `G` unitary, `G_+` free, `G^- = −ν G_+† G`,
/// `G^-_+ = −(i/ħ)E − ½ν G_+†G_+` with `E` Hermitian.
pub fn random_pseudo_unitary<R: Rng>(rng: &mut R, n: usize, nu: f64, hbar: f64) -> BoundaryGenerator {
    let g = random_unitary(rng, n);
    let gp = random_matrix(rng, n, 0.5);
    let gm = (gp.adjoint() * &g).scale(-nu);
    let e = random_hermitian(rng, n, 1.0);
    let gpm = e.map(|v| v * C64::new(0.0, -1.0 / hbar)) - (gp.adjoint() * &gp).scale(0.5 * nu);
    BoundaryGenerator::new(vec![g], vec![gp], vec![gm], gpm, nu, e, hbar).unwrap()
}

pub fn rms(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0, 0usize);
    for v in values {
        s += v * v;
        c += 1;
    }
    (s / c as f64).sqrt()
}
