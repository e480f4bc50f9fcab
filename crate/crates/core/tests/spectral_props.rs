//! Property tests for the spectral layer against direct trigonometric sums.

use std::f64::consts::PI;

use proptest::prelude::*;
use vortexforge::pointvortex::VortexConfiguration;
use vortexforge::spectral::*;
use vortexforge::C64;

fn density_strategy(n: usize) -> impl Strategy<Value = SpectralDensity> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| SpectralDensity::from_coeffs(v.into_iter().map(|(a, b)| C64::new(a, b)).collect()))
}

/// `φ(θ) = Σ 2Re(φ̂_m e^{imθ})` by direct summation.
fn eval_direct(d: &SpectralDensity, th: f64) -> f64 {
    d.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| 2.0 * (c * C64::from_polar(1.0, (i + 1) as f64 * th)).re)
        .sum()
}

/// Conjugate function: `cos mθ ↦ sin mθ`, `sin mθ ↦ −cos mθ`, by direct summation.
fn hilbert_direct(d: &SpectralDensity, th: f64) -> f64 {
    d.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let m = (i + 1) as f64;
            // 2Re(c e^{imθ}) = 2a cos mθ − 2b sin mθ.
            2.0 * c.re * (m * th).sin() + 2.0 * c.im * (m * th).cos()
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_round_trip(d in density_strategy(12)) {
        let g = to_grid(&d, 64).unwrap();
        for (j, v) in g.values.iter().enumerate() {
            let th = 2.0 * PI * j as f64 / 64.0;
            prop_assert!((v.re - eval_direct(&d, th)).abs() < 1e-13);
            prop_assert!(v.im.abs() < 1e-13);
        }
        let back = to_coeffs(&g, 12);
        for (a, b) in back.coeffs.iter().zip(&d.coeffs) {
            prop_assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn cauchy_matches_hilbert_relation(d in density_strategy(10)) {
        // 2𝒞φ = i𝓗φ + P₀φ − φ, with P₀φ = 0 for mean-zero densities.
        let c = cauchy(&d, 64).unwrap();
        for (j, v) in c.values.iter().enumerate() {
            let th = 2.0 * PI * j as f64 / 64.0;
            let rhs = C64::new(-eval_direct(&d, th), hilbert_direct(&d, th));
            prop_assert!((2.0 * v - rhs).norm() < 1e-13);
        }
    }

    #[test]
    fn multiplier_inverse_round_trip(d in density_strategy(16)) {
        for kind in [MultiplierKind::ReTauCDtau, MultiplierKind::ReITauCDtau, MultiplierKind::ReCDtau] {
            let s = apply_multiplier(kind, &d);
            let back = invert_multiplier(kind, &s).unwrap();
            for (a, b) in back.coeffs.iter().zip(&d.coeffs) {
                prop_assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn symmetry_projection_is_idempotent(d in density_strategy(9)) {
        use SymmetryClass::*;
        for class in [Rr, Ir, Ii, Ri, RrIi, RrRi, IrIi, None] {
            let p = symmetry_project(class, &d);
            prop_assert!(symmetry_defect(class, &p) < 1e-15);
            let pp = symmetry_project(class, &p);
            prop_assert_eq!(&pp, &p);
        }
    }

    #[test]
    fn trace_round_trip(d in density_strategy(8), rho in 0.05f64..0.4) {
        let cfg = VortexConfiguration::new(
            vec![1.0, -0.5, 2.0],
            vec![C64::new(0.0, 0.0), C64::new(1.5, 0.2), C64::new(-0.3, 1.4)],
            0.0,
            0.0,
        );
        let mut mu = DensityVector::zeros(3, 8);
        mu[0] = d.clone();
        mu[1] = d.scaled(-0.5).reflected();
        mu[2] = d.starred();
        for k in 0..3 {
            let tr = trace_z(rho, &cfg, &mu, k, 64).unwrap();
            let back = recover_density(&tr, 8);
            for (a, b) in back.coeffs.iter().zip(&mu[k].coeffs) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn symmetry_classes_match_their_definitions() {
    // rr: φ(τ̄) = φ(τ); ii: φ(−τ̄) = −φ(τ), checked pointwise.
    let d = SpectralDensity::from_coeffs(vec![C64::new(0.3, 0.7), C64::new(-0.2, 0.4), C64::new(0.5, -0.1)]);
    let rr = symmetry_project(SymmetryClass::Rr, &d);
    let ii = symmetry_project(SymmetryClass::Ii, &d);
    let ir = symmetry_project(SymmetryClass::Ir, &d);
    for j in 0..17 {
        let th = 2.0 * PI * j as f64 / 17.0;
        assert!((eval_direct(&rr, th) - eval_direct(&rr, -th)).abs() < 1e-14);
        assert!((eval_direct(&ii, PI - th) + eval_direct(&ii, th)).abs() < 1e-14);
        assert!((eval_direct(&ir, -th) + eval_direct(&ir, th)).abs() < 1e-14);
    }
}

#[test]
fn exterior_field_decays_and_refines() {
    let cfg = VortexConfiguration::new(vec![1.0, 1.0], vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)], 0.0, 0.0);
    let mut mu = DensityVector::zeros(2, 6);
    mu[0].coeffs[0] = C64::new(1.0, 0.0);
    mu[1].coeffs[2] = C64::new(0.0, 0.5);
    let near = field_z(0.2, &cfg, &mu, C64::new(0.0, 0.5), 128).unwrap();
    let near_fine = field_z(0.2, &cfg, &mu, C64::new(0.0, 0.5), 256).unwrap();
    assert!((near - near_fine).norm() < 1e-14);
    let far = field_z(0.2, &cfg, &mu, C64::new(1e4, 0.0), 64).unwrap();
    assert!(far.norm() * 1e4 < 1.0);
}
