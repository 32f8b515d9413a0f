use filtration::evolution::{constraint_defects, energy_audit, simulate, StateVector, System};
use filtration::forms::MaterialParams;
use filtration::initial::{random_state, InitialCondition};
use filtration::mesh::build_mesh;
use proptest::prelude::*;

fn system(n: usize) -> System<f64> {
    System::new(build_mesh(n, 2, 2, 1, 0.2).unwrap(), MaterialParams::default(), false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn energy_never_increases(seed in 0u64..1000, dt in 1e-3f64..0.5, amp in 0.01f64..10.0) {
        let mut sys = system(2);
        let y0 = random_state(&sys, seed, amp).unwrap();
        let traj = simulate(&mut sys, y0, dt, 8, None);
        let audit = energy_audit(&sys, &traj, 1e-8, true);
        prop_assert!(audit.pass, "{:?}", audit);
        for s in &traj.states {
            let (slave, div) = constraint_defects(&sys, s);
            prop_assert_eq!(slave, 0.0);
            prop_assert!(div <= 1e-10);
        }
    }

    #[test]
    fn resolvent_is_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
        let sys = system(2);
        let f = random_state(&sys, seed, 1.0).unwrap();
        let y = sys.resolvent_solve(&f).unwrap();
        let yc = sys.resolvent_solve(&f.scaled(c)).unwrap();
        let err = yc.vel.iter().zip(&y.vel).map(|(a, b)| (a - c * b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10 * (1.0 + c.abs()));
    }
}

#[test]
fn dissipation_accounts_for_the_energy_drop() {
    let mut sys = system(3);
    let y0 = random_state(&sys, 5, 1.0).unwrap();
    let dt = 0.02;
    let traj = simulate(&mut sys, y0, dt, 20, None);
    let e0 = sys.energy(&traj.states[0]);
    // telescoped identity: E(0) − E(t_N) = Σ (J + 2Δt D)
    let lost: f64 = traj.reports.iter().map(|r| r.j + 2.0 * dt * r.d_diss).sum();
    let last = traj.reports.last().unwrap();
    assert!((e0 - last.e - lost).abs() <= 1e-10 * e0, "{} vs {}", e0 - last.e, lost);
    assert!(traj.reports.iter().all(|r| r.j >= 0.0 && r.d_diss >= 0.0));
}

#[test]
fn zero_initial_condition_stays_at_rest() {
    let mut sys = system(2);
    let y0: StateVector<f64> = InitialCondition::Zero.build(&sys).unwrap();
    let traj = simulate(&mut sys, y0, 0.1, 5, None);
    assert!(traj.states.iter().all(|s| s.disp.iter().chain(&s.vel).all(|&v| v == 0.0)));
}

#[test]
fn invalid_step_stops_the_run() {
    let mut sys = system(2);
    let y0 = random_state(&sys, 1, 1.0).unwrap();
    let traj = simulate(&mut sys, y0, -1.0, 3, None);
    assert!(traj.error.is_some());
    assert_eq!(traj.states.len(), 1);
}
