//! Invariants of the hollow-vortex residual on random states.

use proptest::prelude::*;
use vortexforge::desingularize::{leading_guess, Scenario};
use vortexforge::hollowvortex::*;
use vortexforge::pointvortex::{builtin, ParameterSplit, VortexConfiguration};
use vortexforge::C64;

fn builtin_case(i: usize) -> (VortexConfiguration, ParameterSplit) {
    match i {
        0 => (builtin::rotating_pair(), builtin::rotating_split()),
        1 => (builtin::translating_pair(), builtin::translating_split()),
        _ => (builtin::stationary_tripole(), builtin::tripole_split()),
    }
}

fn perturbed(cfg: &VortexConfiguration, split: &ParameterSplit, n: usize, rho: f64, coeffs: &[(f64, f64)], q: f64) -> HollowState {
    let mut u = HollowState::trivial(cfg, split, n, rho);
    for k in 0..cfg.m() {
        for i in 0..n {
            let (a, b) = coeffs[(k * n + i) % coeffs.len()];
            let s = 0.1 / (1 + i * i) as f64;
            u.mu[k].coeffs[i] = C64::new(a * s, b * s);
            u.nu[k].coeffs[i] = C64::new(b * s, -a * s);
        }
        u.q[k] = q * (k as f64 + 1.0);
    }
    u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn phi_vanishes_for_any_state(
        case in 0usize..3,
        rho in prop_oneof![-0.2f64..-0.02, 0.02f64..0.2],
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8..24),
        q in -0.1f64..0.1,
    ) {
        let (cfg, split) = builtin_case(case);
        let kind = PhiKind::for_steady_kind(cfg.steady_kind().unwrap());
        let u = perturbed(&cfg, &split, 8, rho, &coeffs, q);
        let fields = FlowFields::with_nq(&u, 64).unwrap();
        let r = residual_from_fields(&fields).unwrap();
        prop_assert!(hv_phi_from_fields(kind, &r, &fields).unwrap().magnitude() < 1e-12);
    }

    #[test]
    fn parity_maps_residual_to_its_negated_reflection(
        case in 0usize..3,
        rho in 0.02f64..0.2,
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8..24),
        q in -0.1f64..0.1,
    ) {
        let (cfg, split) = builtin_case(case);
        let u = perturbed(&cfg, &split, 8, rho, &coeffs, q);
        let nq = 64;
        let r = residual(&u, nq).unwrap();
        let rp = residual(&parity_image(&u), nq).unwrap();
        for k in 0..cfg.m() {
            for j in 0..nq {
                // Node j at θ maps to −θ, i.e. −τ = e^{i(θ+π)}.
                let jm = (j + nq / 2) % nq;
                prop_assert!((rp.a[k][jm] + r.a[k][j]).abs() < 1e-12);
                prop_assert!((rp.b[k][jm] + r.b[k][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn trivial_state_is_a_solution_at_zero_radius() {
    for i in 0..3 {
        let (cfg, split) = builtin_case(i);
        let u = HollowState::trivial(&cfg, &split, 8, 0.0);
        assert!(residual(&u, 32).unwrap().sup() < 1e-14);
    }
}

#[test]
fn leading_guess_residual_is_second_order() {
    for scn in [Scenario::rotating_pair(), Scenario::translating_pair(), Scenario::stationary_tripole()] {
        let rs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&rho| residual(&leading_guess(&scn, rho, 16).unwrap(), 64).unwrap().sup())
            .collect();
        for w in rs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "{:?}: {rs:?}", scn.kind);
        }
    }
}

#[test]
fn circulation_of_each_boundary_is_gamma() {
    let (cfg, split) = builtin_case(2);
    let u = perturbed(&cfg, &split, 8, 0.1, &[(0.3, -0.2), (0.7, 0.1)], 0.05);
    for k in 0..cfg.m() {
        assert!((circulation(&u, k).unwrap() - cfg.circulations[k]).abs() < 1e-12);
    }
}
