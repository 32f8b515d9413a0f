use filtration::evolution::{simulate, System};
use filtration::forms::MaterialParams;
use filtration::initial::random_state;
use filtration::io::config::{parse_config_str, Config, ConfigError};
use filtration::io::csv::{read_energy_csv, write_energy_csv};
use filtration::io::summary::{read_summary, write_summary, Check};
use filtration::io::vtk::{read_vtk, snapshot_grids, write_vtk_snapshot};
use filtration::mesh::build_mesh;
use filtration::vonkarman::{simulate_nonlinear, VkConfig, VonKarman};
use proptest::prelude::*;

fn system() -> System<f64> {
    System::new(build_mesh(2, 2, 2, 1, 0.2).unwrap(), MaterialParams::default(), false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips(n in 1usize..9, dt in 1e-6f64..1.0, steps in 1usize..10_000, mu in 0.01f64..100.0, stride in 0usize..10) {
        let mut c = Config::default();
        c.mesh.n_plane = n;
        c.run.dt = dt;
        c.run.steps = steps;
        c.params.mu_f = mu;
        c.output.snapshot_stride = stride;
        prop_assert_eq!(parse_config_str(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn summary_round_trips(v in prop::collection::vec((-1e6f64..1e6, 0.0f64..1e3), 0..8)) {
        let checks: Vec<Check> = v.iter().enumerate().map(|(i, &(a, b))| Check::at_most(format!("c{i}"), a, b)).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.json");
        write_summary(&checks, &p).unwrap();
        prop_assert_eq!(read_summary(&p).unwrap(), checks);
    }
}

#[test]
fn config_errors_carry_lines() {
    let text = "{\n  \"mesh\": {\n    \"n_plane\": 0\n  }\n}";
    match parse_config_str(text).unwrap_err() {
        ConfigError::Invalid { key, line, .. } => assert_eq!((key.as_str(), line), ("n_plane", 3)),
        e => panic!("{e:?}"),
    }
    let text = "{\n  \"params\": {\n    \"c_p\": -1\n  }\n}";
    let e = parse_config_str(text).unwrap_err();
    assert!(e.to_string().contains("c_b, c_p must be > 0"), "{e}");
    assert!(matches!(parse_config_str("{\"mesh\": {\"nx\": 3}}"), Err(ConfigError::UnknownKey { .. })));
}

#[test]
fn energy_csv_is_bit_faithful() {
    let mut sys = system();
    let y0 = random_state(&sys, 8, 1.0).unwrap();
    let traj = simulate(&mut sys, y0, 0.05, 6, None);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("energy.csv");
    write_energy_csv(&traj.reports, &p).unwrap();
    let rows = read_energy_csv(&p).unwrap();
    for (r, rep) in rows.iter().zip(&traj.reports) {
        assert_eq!((r.t, r.e, r.d_diss, r.j, r.identity_residual), (rep.t, rep.e, rep.d_diss, rep.j, rep.identity_residual));
        assert_eq!(r.blocks, rep.blocks.as_array());
    }
}

#[test]
fn nonlinear_csv_carries_potential() {
    let mut sys = system();
    let vk = VonKarman::new(&sys, VkConfig::default()).unwrap();
    let y0 = random_state(&sys, 2, 0.5).unwrap();
    let traj = simulate_nonlinear(&mut sys, &vk, y0, 1e-3, 3);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("energy.csv");
    write_energy_csv(&traj.reports, &p).unwrap();
    let rows = read_energy_csv(&p).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().zip(&traj.reports).all(|(r, rep)| r.pi == rep.potential && r.pi.unwrap() >= 0.0));
}

#[test]
fn vtk_snapshot_round_trips() {
    let sys = system();
    let s = random_state(&sys, 3, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_vtk_snapshot(&sys, &s, dir.path(), "snap").unwrap();
    let grids = snapshot_grids(&sys, &s);
    assert_eq!(paths.len(), grids.len());
    for (path, (_, g)) in paths.iter().zip(&grids) {
        let back = read_vtk(path).unwrap();
        assert_eq!(&back, g);
        let n = g.points.len();
        for (name, (comp, vals)) in &g.point_data {
            assert_eq!(vals.len(), comp * n, "{name}");
        }
    }
    std::fs::write(&paths[0], "# vtk DataFile Version 3.0\nbroken\n").unwrap();
    assert!(read_vtk(&paths[0]).is_err());
}
