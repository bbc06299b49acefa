use std::hint::black_box;

use advreg::{
    load_gridworld, occupancy_of_policy, regularized_value_iteration, solve_simplex_conjugate, trace_robust_boundary,
    AlphaParam, BoundaryGrid, GridParams, RegScheme, StateReg, DEFAULT_GRID,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn simplex_conjugate(c: &mut Criterion) {
    let pi0 = [0.1, 0.2, 0.3, 0.15, 0.25];
    let q = [0.4, -0.3, 1.2, 0.9, -1.1];
    let mut group = c.benchmark_group("simplex_conjugate");
    for alpha in [0.5, 1.0, 2.0, 3.0] {
        let reg = StateReg::new(AlphaParam::new(alpha).unwrap(), 5.0, &pi0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(alpha), &reg, |b, reg| {
            b.iter(|| solve_simplex_conjugate(black_box(&q), reg).unwrap())
        });
    }
    group.finish();
}

fn gridworld_value_iteration(c: &mut Criterion) {
    let world = load_gridworld(DEFAULT_GRID, &GridParams::default()).unwrap();
    let mdp = &world.mdp;
    let mut group = c.benchmark_group("gridworld_value_iteration");
    group.sample_size(10);
    for alpha in [1.0, 2.0] {
        let scheme = RegScheme::uniform_policy(AlphaParam::new(alpha).unwrap(), 1.0, mdp.n_states(), 4).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(alpha), &scheme, |b, scheme| {
            b.iter(|| regularized_value_iteration(mdp, scheme, 1e-10, 100_000).unwrap())
        });
    }
    group.finish();
}

fn occupancy(c: &mut Criterion) {
    let world = load_gridworld(DEFAULT_GRID, &GridParams::default()).unwrap();
    let mdp = &world.mdp;
    let scheme = RegScheme::uniform_policy(AlphaParam::KL, 1.0, mdp.n_states(), 4).unwrap();
    let pi = regularized_value_iteration(mdp, &scheme, 1e-10, 100_000).unwrap().pi;
    c.bench_function("occupancy_of_policy", |b| b.iter(|| occupancy_of_policy(black_box(&pi), mdp).unwrap()));
}

fn boundary(c: &mut Criterion) {
    let pi0 = [0.5, 0.5];
    let grid = BoundaryGrid::default_for(10.0);
    let mut group = c.benchmark_group("trace_robust_boundary");
    group.sample_size(10);
    for alpha in [1.0, 2.0] {
        let reg = StateReg::new(AlphaParam::new(alpha).unwrap(), 10.0, &pi0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(alpha), &reg, |b, reg| {
            b.iter(|| trace_robust_boundary(reg, &grid).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simplex_conjugate, gridworld_value_iteration, occupancy, boundary);
criterion_main!(benches);
