use filtration::dof::{build_dof_layout, Field};
use filtration::forms::{assemble_forms, MaterialParams};
use filtration::mesh::build_mesh;
use filtration::quadrature::quadrature_rule;
use proptest::prelude::*;

fn params(c: [f64; 6]) -> MaterialParams<f64> {
    MaterialParams { lambda_b: c[0], mu_b: c[1], alpha_b: c[2], alpha_p: c[3], mu_f: c[4], beta_bjs: c[5], ..MaterialParams::default() }
}

/// Free vector equal to 1 on every DOF of `fields`.
fn indicator(layout: &filtration::dof::DofLayout, fields: &[Field]) -> Vec<f64> {
    let mut x = vec![0.0; layout.n_free];
    for &f in fields {
        for i in layout.block(f) {
            x[i] = 1.0;
        }
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn coupling_cancels_for_any_coefficients(c in prop::array::uniform6(0.1f64..5.0), seed in 0u64..50) {
        let m = build_mesh(2, 2, 2, 1, 0.2).unwrap();
        let l = build_dof_layout(&m);
        let f = assemble_forms(&m, &l, &params(c), false);
        let x: Vec<f64> = (0..l.n_free).map(|i| ((i as f64 + seed as f64) * 0.7).sin()).collect();
        let a = f.resolvent_matrix().quad_form(&x);
        prop_assert!(f.coupling().quad_form(&x).abs() <= 1e-12 * a);
        prop_assert!(a > 0.0);
    }

    #[test]
    fn gauss_rules_integrate_monomials(order in 1usize..6, p in 0usize..12, q in 0usize..12) {
        prop_assume!(p < 2 * order && q < 2 * order);
        let r = quadrature_rule::<f64>(2, order);
        let s: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x[0].powi(p as i32) * x[1].powi(q as i32)).sum();
        let exact = 1.0 / ((p + 1) * (q + 1)) as f64;
        prop_assert!((s - exact).abs() < 1e-14);
    }
}

#[test]
fn pressure_masses_measure_their_layers() {
    let p = MaterialParams { c_b: 2.0, c_p: 3.0, ..MaterialParams::default() };
    let m = build_mesh(3, 2, 2, 2, 0.25).unwrap();
    let l = build_dof_layout(&m);
    let f = assemble_forms(&m, &l, &p, false);
    // p = 1 everywhere except the drained top face of the Biot layer, where
    // p_b ramps to 0 across the last of the two layers (thickness 1/2)
    let one = indicator(&l, &[Field::Pb, Field::Pp]);
    assert!((f.mass_pb.quad_form(&one) - 2.0 * (0.5 + 0.5 / 3.0)).abs() < 1e-12);
    assert!((f.diff_pb.quad_form(&one) - 2.0).abs() < 1e-12);
    assert!((f.mass_pp.quad_form(&one) - 3.0 * 0.25).abs() < 1e-12);
    assert!(f.diff_pp.quad_form(&one).abs() < 1e-12);
}

#[test]
fn elastic_energy_of_vertical_stretch() {
    // η = (0, 0, z(1 − z)) interpolated on three layers: a_E = (2μ + λ) ∫ (∂z η3)² = 4.5 · 8/27
    let p = MaterialParams { lambda_b: 0.5, mu_b: 2.0, ..MaterialParams::default() };
    let m = build_mesh(2, 3, 1, 1, 0.2).unwrap();
    let l = build_dof_layout(&m);
    let f = assemble_forms(&m, &l, &p, false);
    let mut raw = l.zero_raw::<f64>();
    for node in 0..m.biot.n_nodes() {
        let z = m.biot.node_coords[node][2];
        raw.eta[3 * node + 2] = z * (1.0 - z);
    }
    let x = l.restrict(&raw);
    assert_eq!(l.expand(&x).eta, raw.eta);
    assert!((f.elastic.quad_form(&x) - 4.5 * 8.0 / 27.0).abs() < 1e-12);
}
