use obstacle_core::coefficient::{ConstantCoefficient, SymTensor};
use obstacle_core::exec::Exec;
use obstacle_core::grid::SpatialGrid;
use obstacle_core::library::builtin;
use obstacle_core::problem::Scenario;
use obstacle_core::solver::solve_penalized;
use obstacle_core::stochastic::{feynman_kac_check, mean_and_error, sample_nodes, simulate_paths, PathOptions};

#[test]
fn identical_seeds_give_identical_batches() {
    let grid = SpatialGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![8, 8]).unwrap();
    let a = ConstantCoefficient::new(SymTensor::new_2d(1.5, 0.3, 0.8));
    let opts = PathOptions::new(5000, 1e-3, 42);
    let p = simulate_paths(&grid, &a, 0.0, &[0.3, 0.6], 0.5, &opts, Exec::Parallel).unwrap();
    let q = simulate_paths(&grid, &a, 0.0, &[0.3, 0.6], 0.5, &opts, Exec::Parallel).unwrap();
    assert_eq!(p, q);
    let other = PathOptions::new(5000, 1e-3, 43);
    let r = simulate_paths(&grid, &a, 0.0, &[0.3, 0.6], 0.5, &other, Exec::Parallel).unwrap();
    assert_ne!(p.exit_times, r.exit_times);
}

#[test]
fn affine_functions_are_martingales() {
    // The stopped Euler chain has mean-zero increments, so E[phi(X)] = phi(x) for affine phi.
    let grid = SpatialGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![8, 8]).unwrap();
    let a = ConstantCoefficient::new(SymTensor::new_2d(1.0, 0.4, 2.0));
    let x0 = [0.4, 0.7];
    let phi = |x: &[f64]| 0.5 + 2.0 * x[0] - 3.0 * x[1];
    let opts = PathOptions::new(100_000, 1e-3, 9);
    let b = simulate_paths(&grid, &a, 0.0, &x0, 0.25, &opts, Exec::default()).unwrap();
    let values: Vec<f64> = b.exit_points.chunks(2).map(phi).collect();
    let (mean, se) = mean_and_error(&values);
    assert!((mean - phi(&x0)).abs() <= 3.0 * se, "{mean} vs {} (se {se})", phi(&x0));
}

#[test]
fn trivial_scenario_estimates_zero_exactly() {
    let mut cfg = builtin("trivial_ball").unwrap();
    cfg.monte_carlo.paths = 2000;
    let s = Scenario::from_config(&cfg, Exec::default()).unwrap();
    let sol = solve_penalized(&s, 64.0).unwrap();
    let fk = feynman_kac_check(&s, &sol, &sample_nodes(&s.grid, 5)).unwrap();
    assert!(fk.passed);
    for r in &fk.rows {
        for e in &r.estimates {
            assert_eq!((e.estimate, e.standard_error), (0.0, 0.0));
        }
    }
}

#[test]
fn heat_estimate_tracks_the_closed_form() {
    let mut cfg = builtin("heat_manufactured").unwrap();
    cfg.monte_carlo.paths = 20_000;
    let s = Scenario::from_config(&cfg, Exec::default()).unwrap();
    let sol = solve_penalized(&s, 16.0).unwrap();
    let nodes = sample_nodes(&s.grid, 6);
    let fk = feynman_kac_check(&s, &sol, &nodes).unwrap();
    assert!(fk.passed, "{:?}", fk.rows);
    for r in &fk.rows {
        let exact = (-(1.0 - r.start_time) / 2.0f64).exp() * r.point[0].sin();
        assert!((r.estimates[0].estimate - exact).abs() <= r.band[0]);
    }
}

#[test]
fn too_few_paths_are_reported() {
    let mut cfg = builtin("heat_manufactured").unwrap();
    cfg.monte_carlo.paths = 4;
    cfg.monte_carlo.max_relative_error = 1e-3;
    let s = Scenario::from_config(&cfg, Exec::default()).unwrap();
    let sol = solve_penalized(&s, 16.0).unwrap();
    let err = feynman_kac_check(&s, &sol, &[10]).unwrap_err();
    assert!(matches!(err, obstacle_core::Error::InsufficientPaths { .. }), "{err}");
}
