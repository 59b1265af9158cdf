use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use obstacle_core::coefficient::RotatingAnisotropy;
use obstacle_core::exec::Exec;
use obstacle_core::grid::SpatialGrid;
use obstacle_core::ladder::run_ladder_report;
use obstacle_core::library::builtin;
use obstacle_core::operator::assemble;
use obstacle_core::problem::Scenario;
use obstacle_core::stochastic::{simulate_paths, PathOptions};

const POLICIES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn mc_paths(c: &mut Criterion) {
    let grid = SpatialGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![16, 16]).unwrap();
    let a = RotatingAnisotropy::new(1.5, 0.75, 1.0, 0.0).unwrap();
    let opts = PathOptions::new(20_000, 2.5e-3, 1);
    let mut group = c.benchmark_group("mc_paths");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_paths(&grid, &a, 0.5, &[0.3, 0.6], 1.0, &opts, exec).unwrap())
        });
    }
    group.finish();
}

fn ladder_rungs(c: &mut Criterion) {
    let cfg = builtin("coupled_two_component").unwrap();
    let mut group = c.benchmark_group("ladder_rungs");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let s = Scenario::from_config(&cfg, exec).unwrap();
        group.bench_function(name, |b| b.iter(|| run_ladder_report(black_box(&s)).unwrap()));
    }
    group.finish();
}

fn row_assembly(c: &mut Criterion) {
    let grid = SpatialGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![256, 256]).unwrap();
    let a = RotatingAnisotropy::new(2.0, 0.5, 1.0, 3.0).unwrap();
    let mut group = c.benchmark_group("row_assembly");
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| assemble(&a, &grid, black_box(0.3), exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, mc_paths, ladder_rungs, row_assembly);
criterion_main!(benches);
