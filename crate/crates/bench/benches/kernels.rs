use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fpsi_core::biot_fluid::{assemble_step, solve_step, StepInput, SOLVE_TOLERANCE};
use fpsi_core::geometry::CertThresholds;
use fpsi_core::plate::{solve_plate_step, PlateState};
use fpsi_core::{BiotState, Discretization, DiscretizationParams, PhysicalParams, StepGeometry, StressDatum};

fn kernels(c: &mut Criterion) {
    let disc = Discretization::new(DiscretizationParams::default()).unwrap();
    let data = StressDatum::committed().initial_data(&disc, 1.0);
    let prm = PhysicalParams::default();
    let dt = 0.25 / 32.0;
    let omega = disc.reg.regularized_trace(&data.eta0);
    let zeta = disc.reg.regularized_trace(&data.xi0);
    let before = PlateState { omega: omega.clone(), zeta };

    c.bench_function("plate_step", |b| b.iter(|| solve_plate_step(&disc.grid, black_box(&before), prm.h, dt).unwrap()));
    c.bench_function("regularize_nodes", |b| b.iter(|| disc.reg.regularize_nodes(black_box(&data.eta0))));
    c.bench_function("regularized_trace", |b| b.iter(|| disc.reg.regularized_trace(black_box(&data.eta0))));
    c.bench_function("ale_solve", |b| b.iter(|| disc.ale.solve(&disc.annulus, &disc.grid, black_box(&omega)).unwrap()));

    let half = solve_plate_step(&disc.grid, &before, prm.h, dt).unwrap();
    let ale_n = disc.ale.solve(&disc.annulus, &disc.grid, &omega).unwrap();
    let ale_next = disc.ale.solve(&disc.annulus, &disc.grid, &half.omega).unwrap();
    let geom = StepGeometry::new(&disc, &omega, &half.omega, ale_n, ale_next, &data.eta0, dt, &CertThresholds::default()).unwrap();
    let eta_prev = data.eta0.iter().zip(&data.xi0).map(|(e, x)| [e[0] - dt * x[0], e[1] - dt * x[1]]).collect();
    let biot = BiotState { eta: data.eta0.clone(), eta_prev, p: data.p0.clone() };
    let u_n = vec![0.0; disc.n_velocity_dofs()];
    let input = || StepInput { u_n: &u_n, biot_n: &biot, zeta_half: &half.zeta };
    c.bench_function("assemble_step", |b| b.iter(|| assemble_step(&disc, &prm, dt, &geom, input()).unwrap()));
    let sys = assemble_step(&disc, &prm, dt, &geom, input()).unwrap();
    c.bench_function("solve_step", |b| b.iter(|| solve_step(&disc, black_box(&sys), &data.eta0, SOLVE_TOLERANCE).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kernels
}
criterion_main!(benches);
