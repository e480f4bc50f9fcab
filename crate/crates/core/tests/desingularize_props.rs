//! Newton solves and continuation for the built-in scenarios.

use vortexforge::desingularize::*;
use vortexforge::hollowvortex::*;
use vortexforge::pointvortex::builtin;

fn scenarios() -> [Scenario; 3] {
    [Scenario::rotating_pair(), Scenario::translating_pair(), Scenario::stationary_tripole()]
}

#[test]
fn newton_converges_with_exact_symmetry() {
    for scn in scenarios() {
        let u0 = leading_guess(&scn, 0.05, 32).unwrap();
        let rep = newton_solve_report(&u0, &scn, &NewtonSettings::default()).unwrap();
        assert!(rep.residual < 1e-11, "{:?}: {}", scn.kind, rep.residual);
        assert!(rep.iterations <= 5);
        assert!(scenario_symmetry_defect(&scn, &rep.state) < 1e-12);
        let fields = FlowFields::new(&rep.state).unwrap();
        let res = residual_from_fields(&fields).unwrap();
        let kind = PhiKind::for_steady_kind(scn.base.steady_kind().unwrap());
        assert!(hv_phi_from_fields(kind, &res, &fields).unwrap().magnitude() < 1e-12);
    }
}

#[test]
fn negative_radius_solution_is_the_parity_image() {
    for scn in scenarios() {
        let s = NewtonSettings::default();
        let plus = newton_solve(&leading_guess(&scn, 0.05, 32).unwrap(), &scn, &s).unwrap();
        let minus = newton_solve(&leading_guess(&scn, -0.05, 32).unwrap(), &scn, &s).unwrap();
        let image = parity_image(&plus);
        assert!(state_distance(&minus, &image) < 1e-10, "{:?}", scn.kind);
        assert!(residual(&image, 128).unwrap().sup() < 1e-11);
    }
}

#[test]
fn unreduced_solve_matches_rescaled_reduced_solve() {
    // The unreduced pair moves its centers at fixed Ω; rescaling to unit half-separation
    // maps it onto the reduced branch at radius 2ρ/d with Ω scaled by d²/4.
    let general = Scenario::general(builtin::rotating_pair(), builtin::rotating_split()).unwrap();
    let s = NewtonSettings::default();
    let rep = newton_solve_report(&leading_guess(&general, 0.05, 16).unwrap(), &general, &s).unwrap();
    assert!(rep.residual < 1e-11);
    assert!(rep.slack.iter().all(|z| z.abs() < 1e-10), "{:?}", rep.slack);
    let cfg = rep.state.cfg();
    let d = (cfg.centers[1] - cfg.centers[0]).norm();
    let reduced = Scenario::rotating_pair();
    let r = newton_solve(&leading_guess(&reduced, 0.1 / d, 16).unwrap(), &reduced, &s).unwrap();
    let omega_scaled = cfg.angular_velocity * d * d / 4.0;
    assert!((r.cfg().angular_velocity - omega_scaled).abs() < 1e-10, "{} vs {omega_scaled}", r.cfg().angular_velocity);
}

#[test]
fn continuation_advances_monotonically_and_keeps_symmetry() {
    let scn = Scenario::rotating_pair();
    let control = StepControl { max_steps: 10, rho_max: 0.5, ..StepControl::default() };
    let run = continue_branch(&scn, 32, control, NewtonSettings::default(), Thresholds::default()).unwrap();
    assert!(run.points.len() >= 8, "{:?} {}", run.termination, run.note);
    for w in run.points.windows(2) {
        assert!(w[1].state.rho > w[0].state.rho);
        assert!(w[1].arclength > w[0].arclength);
    }
    for p in &run.points {
        assert!(scenario_symmetry_defect(&scn, &p.state) < 1e-12);
        assert!(p.diagnostics.residual_sup < 1e-10);
    }
}
