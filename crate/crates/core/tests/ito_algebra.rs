mod common;

use eventum_core::ito_algebra::{
    exact_int, exact_ratio, general_product_coefficient, ito_correction, BoundaryGenerator, CoefficientArray, Exact,
    Index, ItoMatrix,
};
use eventum_core::{CMatrix, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn exact_strategy() -> impl Strategy<Value = Exact> {
    (-20i64..20, 1i64..7, -20i64..20, 1i64..7).prop_map(|(a, b, c, e)| {
        let re = exact_ratio(a, b);
        let im = exact_ratio(c, e);
        Exact::new(re.re, im.re)
    })
}

/// Random admissible matrix: zero row `+` and zero column `−`.
fn ito_strategy(d: usize) -> impl Strategy<Value = ItoMatrix> {
    let dim = d + 2;
    proptest::collection::vec(exact_strategy(), dim * dim).prop_map(move |mut e| {
        for (i, v) in e.iter_mut().enumerate() {
            let (r, c) = (i / dim, i % dim);
            if r == dim - 1 || c == 0 {
                *v = exact_int(0, 0);
            }
        }
        ItoMatrix::from_entries(d, e).unwrap()
    })
}

fn pair_strategy() -> impl Strategy<Value = (ItoMatrix, ItoMatrix)> {
    (1usize..=3).prop_flat_map(|d| (ito_strategy(d), ito_strategy(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn star_is_an_anti_multiplicative_involution((a, b) in pair_strategy()) {
        prop_assert_eq!(a.star().star(), a.clone());
        prop_assert_eq!(a.mul(&b).unwrap().star(), b.star().mul(&a.star()).unwrap());
        prop_assert_eq!(a.add(&b).unwrap().star(), a.star().add(&b.star()).unwrap());
    }
}

fn all_indices(d: usize) -> Vec<Index> {
    (0..d + 2).map(|p| Index::from_position(p, d)).collect()
}

#[test]
fn product_coefficient_matches_matrix_products() {
    for d in 1..=3 {
        let idx = all_indices(d);
        for &mu in &idx {
            for &kappa in &idx {
                for &iota in &idx {
                    for &nu in &idx {
                        let admissible = mu != Index::Plus && iota != Index::Plus && kappa != Index::Minus && nu != Index::Minus;
                        let coef = general_product_coefficient(d, mu, kappa, iota, nu);
                        if !admissible {
                            assert!(coef.is_err());
                            continue;
                        }
                        let lhs = ItoMatrix::elementary(d, mu, kappa)
                            .unwrap()
                            .mul(&ItoMatrix::elementary(d, iota, nu).unwrap())
                            .unwrap();
                        let rhs = ItoMatrix::elementary(d, mu, nu).unwrap().scale(&exact_int(coef.unwrap() as i64, 0));
                        assert_eq!(lhs, rhs, "d={d} ({mu},{kappa})({iota},{nu})");
                    }
                }
            }
        }
    }
}

#[test]
fn out_of_range_channels_are_rejected() {
    assert!(general_product_coefficient(2, Index::Channel(3), Index::Plus, Index::Minus, Index::Plus).is_err());
    assert!(ItoMatrix::elementary(1, Index::Plus, Index::Channel(1)).is_err());
    assert!(ItoMatrix::from_integers(1, &[&[0, 0, 0], &[1, 0, 0], &[0, 0, 0]]).is_err());
}

fn scalar(v: C64) -> CMatrix {
    CMatrix::from_element(1, 1, v)
}

#[test]
fn ito_correction_examples() {
    let one = scalar(C64::new(1.0, 0.0));
    let m = Index::Minus;
    let p = Index::Plus;
    let c1 = Index::Channel(1);
    // Pure dt term squares to zero.
    let dt = CoefficientArray::zeros(1, 1).with(m, p, one.clone()).unwrap();
    assert_eq!(ito_correction(&dt, &dt).unwrap().max_norm(), 0.0);
    // Wiener coefficients give a unit dt coefficient.
    let w = CoefficientArray::zeros(1, 1).with(m, c1, one.clone()).unwrap().with(c1, p, one.clone()).unwrap();
    let c = ito_correction(&w, &w).unwrap();
    assert_eq!(c.get(m, p).unwrap()[(0, 0)], C64::new(1.0, 0.0));
    // Creation-only terms have nothing to pair with.
    let l = scalar(C64::new(0.3, -0.7));
    let cr = CoefficientArray::zeros(1, 1).with(c1, p, l).unwrap();
    assert_eq!(ito_correction(&cr, &cr).unwrap().max_norm(), 0.0);
    assert!(ito_correction(&w, &CoefficientArray::zeros(1, 2)).is_err());
}

#[test]
fn scalar_generator_is_pseudo_unitary() {
    let g = C64::new(0.4, -1.1);
    let e = 0.8;
    let hbar = 1.3;
    let gen = BoundaryGenerator::new(
        vec![scalar(C64::new(1.0, 0.0))],
        vec![scalar(g)],
        vec![scalar(-4.0 * g.conj())],
        scalar(C64::new(-2.0 * g.norm_sqr(), -e / hbar)),
        4.0,
        scalar(C64::new(e, 0.0)),
        hbar,
    )
    .unwrap();
    let r = gen.pseudo_unitarity_residual();
    assert!(r.r1 < 1e-15 && r.r2 < 1e-15 && r.r3 < 1e-15, "{r:?}");
    // The opposite sign in the first relation is reported separately.
    assert!(r.r1_positive_sign > 1.0);
}

#[test]
fn identity_scattering_maps_blocks_by_powers_of_nu() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 3;
    let nu = 2.5;
    let gp = common::random_matrix(&mut rng, n, 1.0);
    let gm = gp.adjoint().scale(-nu);
    let e = common::random_hermitian(&mut rng, n, 1.0);
    let gpm = e.map(|v| v * C64::new(0.0, -1.0)) - (gp.adjoint() * &gp).scale(0.5 * nu);
    let gen = BoundaryGenerator::new(vec![CMatrix::identity(n, n)], vec![gp.clone()], vec![gm.clone()], gpm, nu, e, 1.0).unwrap();
    let s = gen.g_to_s(&[C64::new(0.6, 0.8)]).unwrap();
    assert!((s.s_plus(0) - gp.scale(nu.sqrt())).norm() < 1e-14);
    assert!((s.s_minus(0) - gm.scale(1.0 / nu.sqrt())).norm() < 1e-14);
    assert!(gen.g_to_s(&[C64::new(0.5, 0.0)]).is_err());
}

#[test]
fn pseudo_unitary_generators_give_normalized_stochastic_generators() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let g = common::random_pseudo_unitary(&mut rng, 4, 1.7, 0.9);
        assert!(g.pseudo_unitarity_residual().is_pseudo_unitary(1e-12));
        let s = g.g_to_s(&[C64::new(0.0, 1.0)]).unwrap();
        assert!(s.normalization_residual() < 1e-10);
    }
}
