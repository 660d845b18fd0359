use fpsi_core::geometry::{annulus_path_length, spectral_norm};
use fpsi_core::mesh::norm;
use fpsi_core::plate::{solve_plate_step, verify_plate_energy_identity, PlateState};
use fpsi_core::regularizer::MollifierResolution;
use fpsi_core::regularizer::RegularizationOperator;
use fpsi_core::{build_annulus_mesh, build_disk_mesh, InterfaceGrid, Mesh2D, PlateField, QuadRule, RunConfig, Triplets};
use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;
use std::sync::OnceLock;

fn grid() -> &'static InterfaceGrid {
    static G: OnceLock<InterfaceGrid> = OnceLock::new();
    G.get_or_init(|| InterfaceGrid::new(32, 8).unwrap())
}

fn regularizer() -> &'static (Mesh2D, RegularizationOperator) {
    static R: OnceLock<(Mesh2D, RegularizationOperator)> = OnceLock::new();
    R.get_or_init(|| {
        let mesh = build_disk_mesh(0);
        let op = RegularizationOperator::build(&mesh, grid(), 0.3, &QuadRule::triangle(4), MollifierResolution::default()).unwrap();
        (mesh, op)
    })
}

fn field(coeffs: &[f64]) -> PlateField {
    let g = grid();
    let n = g.n_coeffs();
    let mut f = PlateField::zeros(g);
    for i in 0..n {
        f.c[0][i] = coeffs[i];
        f.c[1][i] = coeffs[n + i];
    }
    f
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 2 * grid().n_coeffs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_projection_inverts_synthesis(c in coeffs()) {
        let g = grid();
        let f = field(&c);
        let back = PlateField::from_samples(g, &f.samples(g));
        for comp in 0..2 {
            for i in 0..g.n_coeffs() {
                prop_assert!((back.c[comp][i] - f.c[comp][i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn plate_step_closes_and_dissipates(w in coeffs(), z in coeffs(), h in 1e-3..1.0f64, dt in 1e-3..0.5f64) {
        let g = grid();
        let before = PlateState { omega: field(&w), zeta: field(&z) };
        let after = solve_plate_step(g, &before, h, dt).unwrap();
        let b = verify_plate_energy_identity(g, &before, &after, h, dt);
        prop_assert!(b.residual <= 1e-11 * b.e_before.max(1.0));
        prop_assert!(b.e_after <= b.e_before);
        prop_assert!(b.dissipation >= 0.0 && b.jump_zeta >= 0.0 && b.jump_omega >= 0.0);
    }

    #[test]
    fn path_length_is_equivalent_to_distance(r1 in 1.0001..1.9999f64, r2 in 1.0001..1.9999f64, t1 in -3.0..3.0f64, t2 in -3.0..3.0f64) {
        let (a, b) = ([r1 * t1.cos(), r1 * t1.sin()], [r2 * t2.cos(), r2 * t2.sin()]);
        let d = norm([a[0] - b[0], a[1] - b[1]]);
        let l = annulus_path_length(a, b).unwrap();
        prop_assert!(l >= d * (1.0 - 1e-14));
        prop_assert!(l <= 5.0 * d + 1e-15);
    }

    #[test]
    fn spectral_norm_bounds_action(a in prop::array::uniform4(-3.0..3.0f64), x in prop::array::uniform2(-1.0..1.0f64)) {
        let m = Matrix2::new(a[0], a[1], a[2], a[3]);
        let v = Vector2::new(x[0], x[1]);
        prop_assert!((m * v).norm() <= spectral_norm(&m) * v.norm() * (1.0 + 1e-12) + 1e-15);
        prop_assert!(spectral_norm(&m) <= m.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn regularizer_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, seed in 0u64..1000) {
        let (mesh, op) = regularizer();
        let f: Vec<[f64; 2]> = mesh.nodes.iter().map(|x| [(x[0] + seed as f64).sin(), x[1] * x[0]]).collect();
        let g: Vec<[f64; 2]> = mesh.nodes.iter().map(|x| [x[1], (seed as f64 * x[0]).cos()]).collect();
        let h: Vec<[f64; 2]> = f.iter().zip(&g).map(|(p, q)| [a * p[0] + b * q[0], a * p[1] + b * q[1]]).collect();
        let (rf, rg, rh) = (op.regularize_nodes(&f), op.regularize_nodes(&g), op.regularize_nodes(&h));
        for k in 0..rh.len() {
            for c in 0..2 {
                prop_assert!((rh[k][c] - a * rf[k][c] - b * rg[k][c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn regularizer_reproduces_constants(c0 in -5.0..5.0f64, c1 in -5.0..5.0f64) {
        let (mesh, op) = regularizer();
        let v = vec![[c0, c1]; mesh.n_nodes()];
        for r in op.regularize_nodes(&v).into_iter().chain(op.regularize_samples(&v)) {
            prop_assert!((r[0] - c0).abs() < 1e-8 && (r[1] - c1).abs() < 1e-8);
        }
    }

    #[test]
    fn overrides_round_trip_through_echo(h in 1e-3..1.0f64, delta in 0.05..0.5f64, refine in 0u32..3) {
        let mut c = RunConfig::default();
        c.apply_override(&format!("h={h:e}")).unwrap();
        c.apply_override(&format!("delta={delta}")).unwrap();
        c.apply_override(&format!("refine={refine}")).unwrap();
        prop_assert_eq!(c.h, h);
        prop_assert_eq!(c.delta, delta);
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn csr_matches_dense(entries in prop::collection::vec((0usize..6, 0usize..5, -1.0..1.0f64), 0..40), x in prop::collection::vec(-1.0..1.0f64, 5)) {
        let mut t = Triplets::new(6, 5);
        let mut dense = [[0.0f64; 5]; 6];
        for &(i, j, v) in &entries {
            t.push(i, j, v);
            dense[i][j] += v;
        }
        let y = t.to_csr().matvec(&x);
        for i in 0..6 {
            let want: f64 = (0..5).map(|j| dense[i][j] * x[j]).sum();
            prop_assert!((y[i] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn mesh_text_round_trips() {
    for m in [build_disk_mesh(1), build_annulus_mesh(1)] {
        let back = Mesh2D::from_text(&m.to_text()).unwrap();
        assert_eq!(back.to_text(), m.to_text());
        assert_eq!(back.nodes, m.nodes);
        assert_eq!(back.triangles, m.triangles);
    }
}
