//! Property checks with independent oracles. The acceptance test runs them at
//! full size; `fpsi verify` runs the invariant subset at a reduced size.

use crate::biot_fluid::{assemble_step, coercivity_closed_form, darcy_bound, quadratic_form, BiotState, PhysicalParams, StepGeometry, StepInput};
use crate::config::RunConfig;
use crate::diagnostics::{build_report, energy_csv_string, monotonicity_violations, sweep_runs, SweepKind, SweepReport, SweepRun};
use crate::discretization::{Discretization, DiscretizationParams};
use crate::driver::{run_config, StressDatum};
use crate::error::Result;
use crate::geometry::{
    annulus_path_length, biot_jacobian, curve_length_under_map, interface_frame, interp_p1, max_gradient_norm, polyline_length, transformed_gradient_scalar,
    transformed_gradient_vector, CertThresholds, DeformationField,
};
use crate::interface::{InterfaceGrid, PlateField};
use crate::mesh::{angle, norm, Mesh2D, PointLocator};
use crate::plate::{plate_energy, solve_plate_step, verify_plate_energy_identity, PlateState};
use crate::quadrature::gauss_legendre;
use crate::regularizer::{apply_row, Extension, Mollifier};
use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

/// Monotonicity is judged up to this multiple of max(1, E^n).
pub const MONOTONE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Energy-monotonicity count over the accepted runs of a check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MonotoneTally {
    pub runs: usize,
    pub steps: usize,
    pub violations: usize,
}

impl MonotoneTally {
    fn add(&mut self, traj: &crate::driver::Trajectory) {
        self.runs += 1;
        self.steps += traj.records.len();
        self.violations += monotonicity_violations(traj, MONOTONE_TOL);
    }

    pub fn merge(self, o: Self) -> Self {
        Self { runs: self.runs + o.runs, steps: self.steps + o.steps, violations: self.violations + o.violations }
    }
}

/// Sample counts of the randomized checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteScale {
    pub plate_steps: usize,
    pub ledger_steps: usize,
    pub coercivity_vectors: usize,
    pub path_pairs: usize,
    pub curve_pairs: usize,
    pub oracle_points: usize,
    pub seed: u64,
}

impl SuiteScale {
    pub fn acceptance() -> Self {
        Self { plate_steps: 1000, ledger_steps: 50, coercivity_vectors: 20, path_pairs: 10_000, curve_pairs: 100, oracle_points: 12, seed: 20240611 }
    }

    pub fn quick() -> Self {
        Self { plate_steps: 120, ledger_steps: 8, coercivity_vectors: 5, path_pairs: 1000, curve_pairs: 10, oracle_points: 4, seed: 7 }
    }
}

fn timed(id: &str, name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let t0 = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult { id: id.into(), name: name.into(), passed, detail, seconds: t0.elapsed().as_secs_f64() }
}

fn random_plate(grid: &InterfaceGrid, rng: &mut ChaCha8Rng) -> PlateField {
    let mut f = PlateField::zeros(grid);
    for comp in 0..2 {
        for i in 0..grid.n_coeffs() {
            let m = grid.mode_of(i).0 as f64;
            f.c[comp][i] = rng.gen_range(-1.0..1.0) / (1.0 + m * m);
        }
    }
    f
}

/// Randomized plate steps over h ∈ {1, 0.1, 0.01} and Δt ∈ {0.1, 0.01}.
pub fn plate_energy_equality(scale: &SuiteScale) -> CheckResult {
    timed("1", "plate-step energy equality", || {
        let grid = InterfaceGrid::new(48, 8)?;
        let mut rng = ChaCha8Rng::seed_from_u64(scale.seed);
        let combos = [(1.0, 0.1), (1.0, 0.01), (0.1, 0.1), (0.1, 0.01), (0.01, 0.1), (0.01, 0.01)];
        let mut worst = 0.0f64;
        let mut bad = 0;
        for i in 0..scale.plate_steps {
            let (h, dt) = combos[i % combos.len()];
            let before = PlateState { omega: random_plate(&grid, &mut rng), zeta: random_plate(&grid, &mut rng) };
            let after = solve_plate_step(&grid, &before, h, dt)?;
            let b = verify_plate_energy_identity(&grid, &before, &after, h, dt);
            let r = b.residual / b.e_before.max(1.0);
            worst = worst.max(r);
            if !(r <= 1e-11) || b.e_after > b.e_before {
                bad += 1;
            }
            debug_assert_eq!(b.e_before, plate_energy(&grid, &before, h));
        }
        Ok((bad == 0, format!("{} steps, max scaled residual {worst:.3e} (tol 1e-11), {bad} failures", scale.plate_steps)))
    })
}

fn stress_config() -> RunConfig {
    RunConfig::default()
}

/// Full runs of `steps` steps in the poroelastic (μ_v = λ_v = 0) and
/// poroviscoelastic regimes; every step must close to 1e-9 relative.
pub fn biot_fluid_energy_equality(scale: &SuiteScale) -> (CheckResult, MonotoneTally) {
    let mut tally = MonotoneTally::default();
    let res = timed("2", "Biot/fluid-step energy equality", || {
        let mut lines = Vec::new();
        let mut ok = true;
        for (label, mu_v, lambda_v) in [("poroelastic", 0.0, 0.0), ("poroviscoelastic", 1.0, 1.0)] {
            let mut cfg = stress_config();
            cfg.mu_v = mu_v;
            cfg.lambda_v = lambda_v;
            cfg.t_final = cfg.dt * scale.ledger_steps as f64;
            let (_, traj) = run_config(&cfg)?;
            let worst = traj.records.iter().map(|r| r.biot.relative).fold(0.0, f64::max);
            let worst_plate = traj.records.iter().map(|r| r.res_plate).fold(0.0, f64::max);
            let pass = traj.outcome.is_complete() && traj.records.len() == scale.ledger_steps && worst <= 1e-9;
            ok &= pass;
            tally.add(&traj);
            lines.push(format!("{label}: {} steps, max relative residual {worst:.3e}, plate {worst_plate:.3e}", traj.records.len()));
        }
        Ok((ok, lines.join("; ")))
    });
    (res, tally)
}

/// Geometry of the first step of the stress datum.
fn first_step_geometry(disc: &Discretization, dt: f64) -> Result<(StepGeometry, BiotState, PlateField)> {
    let data = StressDatum::committed().initial_data(disc, 1.0);
    let omega = disc.reg.regularized_trace(&data.eta0);
    let zeta = disc.reg.regularized_trace(&data.xi0);
    let prm = PhysicalParams::default();
    let half = solve_plate_step(&disc.grid, &PlateState { omega: omega.clone(), zeta }, prm.h, dt)?;
    let ale_n = disc.ale.solve(&disc.annulus, &disc.grid, &omega)?;
    let ale_next = disc.ale.solve(&disc.annulus, &disc.grid, &half.omega)?;
    let geom = StepGeometry::new(disc, &omega, &half.omega, ale_n, ale_next, &data.eta0, dt, &CertThresholds::default())?;
    geom.check()?;
    let eta_prev = data.eta0.iter().zip(&data.xi0).map(|(e, x)| [e[0] - dt * x[0], e[1] - dt * x[1]]).collect();
    Ok((geom, BiotState { eta: data.eta0, eta_prev, p: data.p0 }, half.zeta))
}

/// x^T A x against the closed form, and the Darcy lower bound.
pub fn coercivity_audit(scale: &SuiteScale) -> CheckResult {
    timed("3", "coercivity closed form", || {
        let disc = Discretization::new(DiscretizationParams::default())?;
        let dt = stress_config().dt;
        let (geom, biot, zeta_half) = first_step_geometry(&disc, dt)?;
        let u_n = vec![0.0; disc.n_velocity_dofs()];
        let mut rng = ChaCha8Rng::seed_from_u64(scale.seed ^ 3);
        let mut worst = 0.0f64;
        let mut worst_bound = f64::INFINITY;
        let mut ok = true;
        for prm in [PhysicalParams::default(), PhysicalParams { mu_v: 0.0, lambda_v: 0.0, ..Default::default() }] {
            let sys = assemble_step(&disc, &prm, dt, &geom, StepInput { u_n: &u_n, biot_n: &biot, zeta_half: &zeta_half })?;
            for _ in 0..scale.coercivity_vectors {
                let u: Vec<f64> = disc.velocity.constrained.iter().map(|&c| if c { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
                let eta: Vec<[f64; 2]> = (0..disc.n_disk_nodes()).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
                let p: Vec<f64> = (0..disc.n_disk_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let pi = vec![0.0; disc.n_annulus_nodes()];
                let form = quadratic_form(&sys, &sys.layout.pack(&u, &pi, &eta, &p));
                let closed = coercivity_closed_form(&disc, &prm, dt, &geom, &u, &eta, &p);
                let rel = (form - closed).abs() / closed.abs();
                worst = worst.max(rel);
                let (darcy, bound) = darcy_bound(&disc, &prm, dt, &geom, &p);
                worst_bound = worst_bound.min(darcy / bound);
                ok &= rel <= 1e-9 && closed > 0.0 && darcy >= bound;
            }
        }
        Ok((
            ok,
            format!("{} vectors per regime, max relative mismatch {worst:.3e} (tol 1e-9), min Darcy form / bound {worst_bound:.4}", scale.coercivity_vectors),
        ))
    })
}

/// Central difference of a vector map along e_i.
fn fd_columns(f: impl Fn([f64; 2]) -> [f64; 2], x: [f64; 2], h: f64) -> Matrix2<f64> {
    let mut m = Matrix2::zeros();
    for i in 0..2 {
        let mut a = x;
        let mut b = x;
        a[i] += h;
        b[i] -= h;
        let (fa, fb) = (f(a), f(b));
        for c in 0..2 {
            m[(c, i)] = (fa[c] - fb[c]) / (2.0 * h);
        }
    }
    m
}

fn centroid(mesh: &Mesh2D, e: usize) -> ([f64; 2], f64) {
    let t = mesh.triangles[e];
    let p: Vec<[f64; 2]> = t.iter().map(|&n| mesh.nodes[n]).collect();
    let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
    let inr = 2.0 * mesh.triangle_area(e) / (0..3).map(|k| norm([p[k][0] - p[(k + 1) % 3][0], p[k][1] - p[(k + 1) % 3][1]])).sum::<f64>();
    (c, inr)
}

/// Value of a coefficient vector at angle z, summed directly.
fn fourier_value(grid: &InterfaceGrid, c: &[f64], z: f64) -> f64 {
    (0..grid.n_coeffs())
        .map(|i| {
            let (mode, sine) = grid.mode_of(i);
            let arg = mode as f64 * z;
            c[i] * if mode == 0 { 1.0 } else if sine { arg.sin() } else { arg.cos() }
        })
        .sum()
}

/// Transformed derivatives and Jacobians against finite differences of the
/// maps, the interface frame against differencing in z, and the ALE trace.
pub fn geometry_oracles(_scale: &SuiteScale) -> CheckResult {
    timed("4", "geometry oracle equivalence", || {
        let disc = Discretization::new(DiscretizationParams::default())?;
        let data = StressDatum::committed().initial_data(&disc, 1.0);
        let disk = &disc.disk;
        let eta = DeformationField::new(disk, disc.reg.regularize_nodes(&data.eta0))?;
        let loc = PointLocator::new(disk);
        let jac = biot_jacobian(&eta);
        let gp = transformed_gradient_scalar(disk, &eta, &data.p0)?;
        let gv = transformed_gradient_vector(disk, &eta, &data.xi0)?;
        let eval = |vals: &[[f64; 2]], x: [f64; 2]| {
            let (e, l) = loc.locate(disk, x).expect("point inside element");
            interp_p1(disk, vals, e, l)
        };
        let pvals: Vec<[f64; 2]> = data.p0.iter().map(|&p| [p, 0.0]).collect();
        let mut err_b = 0.0f64;
        for e in 0..disk.n_triangles() {
            let (c, inr) = centroid(disk, e);
            let h = 1e-3 * inr;
            let f = fd_columns(|x| { let v = eval(&eta.values, x); [x[0] + v[0], x[1] + v[1]] }, c, h);
            err_b = err_b.max((f.determinant() - jac[e]).abs());
            let dp = fd_columns(|x| eval(&pvals, x), c, h);
            let dxi = fd_columns(|x| eval(&data.xi0, x), c, h);
            for i in 0..2 {
                let col = [f[(0, i)], f[(1, i)]];
                err_b = err_b.max((gp[e][0] * col[0] + gp[e][1] * col[1] - dp[(0, i)]).abs());
                for r in 0..2 {
                    err_b = err_b.max((gv[e][(r, 0)] * col[0] + gv[e][(r, 1)] * col[1] - dxi[(r, i)]).abs());
                }
            }
        }

        let grid = &disc.grid;
        let omega = disc.reg.regularized_trace(&data.eta0);
        let ale = disc.ale.solve(&disc.annulus, grid, &omega)?;
        let ann = &disc.annulus;
        let aloc = PointLocator::new(ann);
        let mut err_f = 0.0f64;
        for e in 0..ann.n_triangles() {
            let (c, inr) = centroid(ann, e);
            let f = fd_columns(
                |x| {
                    let (k, l) = aloc.locate(ann, x).expect("point inside element");
                    interp_p1(ann, &ale.values, k, l)
                },
                c,
                1e-3 * inr,
            );
            err_f = err_f.max((f - ale.grads[e]).abs().max()).max((f.determinant() - ale.jac[e]).abs());
        }

        // Frame: τ = ∂_z Φ_Γ, n = τ rotated by -π/2; eighth-order differences.
        let frame = interface_frame(grid, &omega);
        let pos = |z: f64| [z.cos() + fourier_value(grid, &omega.c[0], z), z.sin() + fourier_value(grid, &omega.c[1], z)];
        let (st, co) = ([4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0], 1e-2);
        let mut err_frame = 0.0f64;
        for j in 0..grid.m {
            let z = grid.samples[j];
            let mut d = [0.0; 2];
            for (k, w) in st.iter().enumerate() {
                let s = (k + 1) as f64 * co;
                let (a, b) = (pos(z + s), pos(z - s));
                d[0] += w * (a[0] - b[0]) / co;
                d[1] += w * (a[1] - b[1]) / co;
            }
            let t = frame.tau[j];
            let n = frame.n[j];
            err_frame = err_frame.max((t[0] - d[0]).abs()).max((t[1] - d[1]).abs());
            err_frame = err_frame.max((n[0] - d[1]).abs()).max((n[1] + d[0]).abs()).max((frame.s[j] - norm(d)).abs());
        }

        let mut err_trace = 0.0f64;
        for &n in disc.ale.interface_nodes() {
            let x = ann.nodes[n];
            let z = angle(x);
            let want = [x[0] + fourier_value(grid, &omega.c[0], z), x[1] + fourier_value(grid, &omega.c[1], z)];
            err_trace = err_trace.max((ale.values[n][0] - want[0]).abs()).max((ale.values[n][1] - want[1]).abs());
        }
        for n in ann.tagged_nodes(crate::mesh::BoundaryTag::Outer) {
            err_trace = err_trace.max((ale.values[n][0] - ann.nodes[n][0]).abs()).max((ale.values[n][1] - ann.nodes[n][1]).abs());
        }
        let ok = err_b <= 1e-6 && err_f <= 1e-6 && err_frame <= 1e-10 && err_trace <= 1e-12;
        Ok((
            ok,
            format!(
                "Biot map/gradients {err_b:.2e}, ALE gradients/Jacobian {err_f:.2e} (tol 1e-6); frame {err_frame:.2e} (tol 1e-10); ALE trace {err_trace:.2e} (tol 1e-12)"
            ),
        ))
    })
}

fn random_annulus_point(rng: &mut ChaCha8Rng, r0: f64, r1: f64) -> [f64; 2] {
    let r = rng.gen_range(r0..r1);
    let t = rng.gen_range(0.0..2.0 * PI);
    [r * t.cos(), r * t.sin()]
}

/// Path-metric equivalence and the curve-length bound under nodal maps.
pub fn path_metric(scale: &SuiteScale) -> CheckResult {
    timed("5", "annulus path metric", || {
        let mut rng = ChaCha8Rng::seed_from_u64(scale.seed ^ 5);
        let mut viol = 0;
        let mut max_ratio = 0.0f64;
        for _ in 0..scale.path_pairs {
            let (a, b) = (random_annulus_point(&mut rng, 1.0 + 1e-9, 2.0 - 1e-9), random_annulus_point(&mut rng, 1.0 + 1e-9, 2.0 - 1e-9));
            let euclid = norm([a[0] - b[0], a[1] - b[1]]);
            let path = annulus_path_length(a, b)?;
            if path < euclid * (1.0 - 1e-14) || path > 5.0 * euclid {
                viol += 1;
            }
            if euclid > 0.0 {
                max_ratio = max_ratio.max(path / euclid);
            }
        }

        let disc = Discretization::new(DiscretizationParams::default())?;
        let ann = &disc.annulus;
        let loc = PointLocator::new(ann);
        let mut curve_viol = 0;
        let mut max_use = 0.0f64;
        for i in 0..scale.curve_pairs {
            let map: Vec<[f64; 2]> = if i % 2 == 0 {
                let om = random_plate(&disc.grid, &mut rng).scale(0.1);
                disc.ale.solve(ann, &disc.grid, &om)?.values
            } else {
                ann.nodes.iter().map(|x| [x[0] + rng.gen_range(-0.02..0.02), x[1] + rng.gen_range(-0.02..0.02)]).collect()
            };
            let lip = max_gradient_norm(ann, &map)?;
            let n = rng.gen_range(2..12);
            let mut th = rng.gen_range(0.0..2.0 * PI);
            let mut poly = Vec::with_capacity(n);
            for _ in 0..n {
                let r = rng.gen_range(1.1..1.8);
                poly.push([r * th.cos(), r * th.sin()]);
                th += rng.gen_range(-0.3..0.3);
            }
            let img = curve_length_under_map(ann, &loc, &map, &poly)?;
            let len = polyline_length(&poly);
            if len > 0.0 {
                max_use = max_use.max(img / (lip * len));
            }
            if img > lip * len * (1.0 + 1e-12) {
                curve_viol += 1;
            }
        }
        Ok((
            viol == 0 && curve_viol == 0,
            format!(
                "{} pairs, {viol} violations, max path/euclid {max_ratio:.4}; {} curves, {curve_viol} violations, max length/(Lip*length) {max_use:.4}",
                scale.path_pairs, scale.curve_pairs
            ),
        ))
    })
}

/// Direct polar-coordinate convolution of the extension with φ_δ.
fn brute_force_mollify(mesh: &Mesh2D, ext: &Extension, moll: &Mollifier, values: &[[f64; 2]], x: [f64; 2]) -> [f64; 2] {
    let (gx, gw) = gauss_legendre(6);
    let (panels, n_theta) = (48, 720);
    let dr = moll.delta / panels as f64;
    let dth = 2.0 * PI / n_theta as f64;
    let mut out = [0.0; 2];
    for p in 0..panels {
        for (t, w) in gx.iter().zip(&gw) {
            let r = (p as f64 + t) * dr;
            let wr = w * dr * r * moll.eval(r);
            if wr == 0.0 {
                continue;
            }
            for k in 0..n_theta {
                let th = (k as f64 + 0.5) * dth;
                let v = ext.eval(mesh, values, [x[0] + r * th.cos(), x[1] + r * th.sin()]);
                out[0] += wr * dth * v[0];
                out[1] += wr * dth * v[1];
            }
        }
    }
    out
}

/// Constant and affine reproduction, agreement with a brute-force
/// convolution and with a 4× finer quadrature, and linearity.
pub fn regularizer_checks(scale: &SuiteScale) -> CheckResult {
    timed("6", "regularizer", || {
        let disc = Discretization::new(DiscretizationParams::default())?;
        let (disk, reg) = (&disc.disk, &disc.reg);
        let delta = reg.delta;
        let cst = vec![[0.7, -1.3]; disk.n_nodes()];
        let mut e_const = 0.0f64;
        for v in reg.regularize_nodes(&cst).into_iter().chain(reg.regularize_samples(&cst)) {
            e_const = e_const.max((v[0] - 0.7).abs()).max((v[1] + 1.3).abs());
        }
        let aff = |x: [f64; 2]| [0.3 + 1.1 * x[0] - 0.4 * x[1], -0.2 + 0.5 * x[0] + 0.9 * x[1]];
        let av: Vec<[f64; 2]> = disk.nodes.iter().map(|&x| aff(x)).collect();
        // The polygonal boundary lies inside the unit circle; stay clear of it.
        let inner = (PI / crate::mesh::ring_count(disc.params.refine) as f64).cos() - delta - 1e-9;
        let mut e_aff = 0.0f64;
        let mut n_aff = 0;
        for (x, v) in disk.nodes.iter().zip(reg.regularize_nodes(&av)) {
            if norm(*x) <= inner {
                let w = aff(*x);
                e_aff = e_aff.max((v[0] - w[0]).abs()).max((v[1] - w[1]).abs());
                n_aff += 1;
            }
        }

        let smooth: Vec<[f64; 2]> = disk.nodes.iter().map(|x| [(2.0 * x[0]).sin() + x[1] * x[1], (x[0] * x[1]).cos() - x[0]]).collect();
        let ext = Extension::new(disk);
        let moll = Mollifier::new(delta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(scale.seed ^ 6);
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for i in 0..scale.oracle_points {
            pts.push(match i % 3 {
                0 => random_annulus_point(&mut rng, 0.0, 0.6),
                1 => random_annulus_point(&mut rng, 0.85, 1.0),
                _ => {
                    let z = disc.grid.samples[rng.gen_range(0..disc.grid.m)];
                    [z.cos(), z.sin()]
                }
            });
        }
        let rows = reg.rows_at(disk, &pts)?;
        let fine = reg.resolution.refined(4);
        let mut e_brute = 0.0f64;
        let mut e_fine = 0.0f64;
        for (x, row) in pts.iter().zip(&rows) {
            let got = apply_row(row, &smooth);
            let bf = brute_force_mollify(disk, &ext, &moll, &smooth, *x);
            let fr = apply_row(&ext.row(disk, &moll, fine, *x), &smooth);
            e_brute = e_brute.max((got[0] - bf[0]).abs()).max((got[1] - bf[1]).abs());
            e_fine = e_fine.max((got[0] - fr[0]).abs()).max((got[1] - fr[1]).abs());
        }

        let (a, b) = (1.7, -0.6);
        let comb: Vec<[f64; 2]> = smooth.iter().zip(&av).map(|(s, v)| [a * s[0] + b * v[0], a * s[1] + b * v[1]]).collect();
        let (rs, ra, rc) = (reg.regularized_trace(&smooth), reg.regularized_trace(&av), reg.regularized_trace(&comb));
        let mut e_lin = 0.0f64;
        for comp in 0..2 {
            for i in 0..rc.c[comp].len() {
                e_lin = e_lin.max((rc.c[comp][i] - a * rs.c[comp][i] - b * ra.c[comp][i]).abs());
            }
        }
        let (ns, na, nc) = (reg.regularize_nodes(&smooth), reg.regularize_nodes(&av), reg.regularize_nodes(&comb));
        for k in 0..nc.len() {
            for comp in 0..2 {
                e_lin = e_lin.max((nc[k][comp] - a * ns[k][comp] - b * na[k][comp]).abs());
            }
        }
        let ok = e_const <= 1e-8 && e_aff <= 1e-8 && n_aff > 0 && e_brute <= 1e-6 && e_fine <= 1e-6 && e_lin <= 1e-13;
        Ok((
            ok,
            format!(
                "constant {e_const:.2e}, affine {e_aff:.2e} on {n_aff} nodes (tol 1e-8); brute force {e_brute:.2e}, 4x quadrature {e_fine:.2e} on {} points (tol 1e-6); linearity {e_lin:.2e}",
                pts.len()
            ),
        ))
    })
}

/// Runs backing criterion 7: Δt ∈ {T/16, ..., T/128} on the stress datum.
pub fn dt_study(levels: usize) -> (SweepReport, Vec<SweepRun>) {
    let mut base = stress_config();
    base.dt = base.t_final / 16.0;
    crate::diagnostics::dt_refinement(&base, levels)
}

/// Runs backing criterion 8: the h list at Δt = T/32.
pub fn h_study(hs: &[f64]) -> (SweepReport, Vec<SweepRun>) {
    crate::diagnostics::h_sweep(&stress_config(), hs)
}

pub const H_LIST: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

fn tally_runs(runs: &[SweepRun]) -> MonotoneTally {
    let mut t = MonotoneTally::default();
    for r in runs {
        if let Ok((_, traj)) = &r.result {
            if traj.outcome.is_complete() {
                t.add(traj);
            }
        }
    }
    t
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

/// Criterion 7 split into the Cauchy-ratio part ("7a") and the drift-order
/// part ("7b").
pub fn self_convergence(report: &SweepReport, runs: &[SweepRun]) -> (Vec<CheckResult>, MonotoneTally) {
    let complete = !report.partial && report.runs.len() == 4;
    let ratios_ok = report.difference_ratios.len() == 2 && report.difference_ratios.iter().all(|r| *r >= 1.5);
    let orders_ok = report.drift_orders.len() == 3 && report.drift_orders.iter().all(|o| *o >= 1.0);
    let a = CheckResult {
        id: "7a".into(),
        name: "self-convergence: Cauchy ratios".into(),
        passed: complete && ratios_ok,
        detail: format!("differences [{}], ratios [{}] (need >= 1.5)", fmt_list(&report.consecutive_differences), fmt_list(&report.difference_ratios)),
        seconds: 0.0,
    };
    let b = CheckResult {
        id: "7b".into(),
        name: "self-convergence: drift order".into(),
        passed: complete && orders_ok,
        detail: format!(
            "max drift [{}], orders [{}] (need >= 1)",
            report.runs.iter().map(|r| format!("{:.4e}", r.max_drift)).collect::<Vec<_>>().join(", "),
            fmt_list(&report.drift_orders)
        ),
        seconds: 0.0,
    };
    (vec![a, b], tally_runs(runs))
}

pub fn singular_limit(report: &SweepReport, runs: &[SweepRun]) -> (CheckResult, MonotoneTally) {
    let complete = !report.partial && report.runs.len() == H_LIST.len();
    let share_ok = report.plate_share_scaling.iter().all(|s| (0.5..=2.0).contains(s));
    let shrink_ok = report.difference_ratios.len() == H_LIST.len() - 2 && report.difference_ratios.iter().all(|r| *r > 1.0);
    let horizons: Vec<f64> = report.runs.iter().map(|r| r.certified_horizon).collect();
    let res = CheckResult {
        id: "8".into(),
        name: "singular limit in h".into(),
        passed: complete && share_ok && shrink_ok && report.horizons_identical,
        detail: format!(
            "horizons [{}] identical={}; share/h scaling [{}] (within [0.5, 2]); difference ratios [{}] (need > 1)",
            fmt_list(&horizons),
            report.horizons_identical,
            fmt_list(&report.plate_share_scaling),
            fmt_list(&report.difference_ratios)
        ),
        seconds: 0.0,
    };
    (res, tally_runs(runs))
}

pub fn monotone_decay(tally: MonotoneTally) -> CheckResult {
    CheckResult {
        id: "9".into(),
        name: "monotone energy decay".into(),
        passed: tally.violations == 0 && tally.runs > 0,
        detail: format!("{} runs, {} steps, {} violations", tally.runs, tally.steps, tally.violations),
        seconds: 0.0,
    }
}

/// Two executions of the T/16 run must give identical CSV text.
pub fn determinism() -> CheckResult {
    timed("10", "determinism", || {
        let mut cfg = stress_config();
        cfg.dt = cfg.t_final / 16.0;
        let a = energy_csv_string(&run_config(&cfg)?.1);
        let b = energy_csv_string(&run_config(&cfg)?.1);
        Ok((a == b, format!("{} bytes, identical={}", a.len(), a == b)))
    })
}

/// Zero data through every sweep kind: all metrics vanish.
pub fn zero_sweeps() -> CheckResult {
    timed("Z", "zero-data sweeps", || {
        let mut base = stress_config();
        base.datum = "zero".into();
        base.dt = base.t_final / 4.0;
        let mut worst = 0.0f64;
        let mut ok = true;
        for (kind, vals) in [(SweepKind::H, vec![1.0, 0.5, 0.25]), (SweepKind::Dt, vec![base.dt, base.dt / 2.0, base.dt / 4.0]), (SweepKind::Delta, vec![0.4, 0.2])] {
            let rep = build_report(kind, &sweep_runs(&base, kind, &vals));
            ok &= !rep.partial;
            for r in &rep.runs {
                worst = worst.max(r.e_final).max(r.terminal_norm).max(r.max_drift).max(r.plate_share);
            }
            for d in &rep.consecutive_differences {
                worst = worst.max(*d);
            }
        }
        Ok((ok && worst == 0.0, format!("largest metric {worst:e}")))
    })
}

/// Ledger closure on a short δ sweep.
pub fn delta_ledgers() -> CheckResult {
    timed("D", "ledger closure across delta", || {
        let mut base = stress_config();
        base.t_final = 4.0 * base.dt;
        let rep = build_report(SweepKind::Delta, &sweep_runs(&base, SweepKind::Delta, &[0.4, 0.2]));
        let worst = rep.runs.iter().map(|r| r.max_ledger_residual).fold(0.0, f64::max);
        Ok((!rep.partial && worst <= 1e-9, format!("{} runs, max ledger residual {worst:.2e}", rep.runs.len())))
    })
}

/// Invariant subset for `fpsi verify`.
pub fn invariant_suite(scale: &SuiteScale) -> Vec<CheckResult> {
    let (c2, tally) = biot_fluid_energy_equality(scale);
    vec![
        plate_energy_equality(scale),
        c2,
        coercivity_audit(scale),
        geometry_oracles(scale),
        path_metric(scale),
        regularizer_checks(scale),
        monotone_decay(tally),
        zero_sweeps(),
        delta_ledgers(),
        determinism(),
    ]
}
