use obstacle_core::config::{ObstacleConfig, TerminalConfig, WitnessConfig};
use obstacle_core::exec::Exec;
use obstacle_core::library::{builtin, psor_compare_2d};
use obstacle_core::problem::Scenario;
use obstacle_core::psor::{heat_reference, psor_reference};
use obstacle_core::solver::{solve_penalized, solve_unconstrained};

#[test]
fn trivial_data_give_the_zero_solution() {
    let s = Scenario::from_config(&builtin("trivial_ball").unwrap(), Exec::default()).unwrap();
    let sol = solve_penalized(&s, 1e4).unwrap();
    assert_eq!(sol.u.max_abs(), 0.0);
    assert_eq!(sol.density.max_abs(), 0.0);
}

#[test]
fn untouched_obstacle_reproduces_the_free_solve() {
    let s = Scenario::from_config(&builtin("heat_manufactured").unwrap(), Exec::default()).unwrap();
    let sol = solve_penalized(&s, 4096.0).unwrap();
    let free = solve_unconstrained(&s).unwrap();
    assert_eq!(sol.density.max_abs(), 0.0);
    assert!(sol.u.max_abs_diff(&free.u) <= 1e-12);
}

#[test]
fn heat_error_shrinks_with_the_grid() {
    let mut errors = Vec::new();
    for (cells, steps) in [(16, 32), (32, 128)] {
        let mut cfg = builtin("heat_manufactured").unwrap();
        cfg.domain.cells = vec![cells];
        cfg.time.steps = steps;
        let s = Scenario::from_config(&cfg, Exec::default()).unwrap();
        let sol = solve_unconstrained(&s).unwrap();
        let exact = heat_reference(&s, &sol.time).unwrap();
        let h = std::f64::consts::PI / cells as f64;
        let err = sol.u.max_abs_diff(&exact);
        assert!(err <= 5.0 * (h * h + 1.0 / steps as f64), "{err}");
        errors.push(err);
    }
    // Both h^2 and dt drop by four.
    assert!(errors[1] < errors[0] / 3.0, "{errors:?}");
}

#[test]
fn lower_obstacle_density_is_the_positive_part() {
    let s = Scenario::from_config(&builtin("psor_compare").unwrap(), Exec::default()).unwrap();
    let n = 256.0;
    let sol = solve_penalized(&s, n).unwrap();
    let sets = s.sets(&sol.time);
    for k in 0..sol.time.steps() {
        for i in 0..sol.u.nodes() {
            let u = sol.u.at(k, i)[0];
            let lo = match &sets[k][i] {
                obstacle_core::geometry::ConvexSet::Box(b) => b.lower()[0],
                _ => unreachable!(),
            };
            let expected = n * (lo - u).max(0.0);
            assert!((sol.density.at(k, i)[0] - expected).abs() <= 1e-9 * (1.0 + expected));
        }
    }
    assert!(sol.density.data().iter().any(|v| *v > 0.0));
}

#[test]
fn penalized_solution_approaches_psor() {
    for cfg in [builtin("psor_compare").unwrap(), psor_compare_2d()] {
        let s = Scenario::from_config(&cfg, Exec::default()).unwrap();
        let coarse = solve_penalized(&s, 256.0).unwrap();
        let fine = solve_penalized(&s, 4096.0).unwrap();
        let reference = psor_reference(&s, &fine.time).unwrap().u;
        let (a, b) = (coarse.u.max_abs_diff(&reference), fine.u.max_abs_diff(&reference));
        assert!(b < 1e-3 && b < a / 4.0, "{}: {a} {b}", cfg.name);
    }
}

#[test]
fn policies_give_identical_solutions() {
    let cfg = builtin("coupled_two_component").unwrap();
    let a = solve_penalized(&Scenario::from_config(&cfg, Exec::Parallel).unwrap(), 1024.0).unwrap();
    let b = solve_penalized(&Scenario::from_config(&cfg, Exec::Sequential).unwrap(), 1024.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn incompatible_terminal_data_are_rejected() {
    let mut cfg = builtin("heat_manufactured").unwrap();
    cfg.terminal = TerminalConfig::Sine { amplitude: vec![3.0] };
    let err = Scenario::from_config(&cfg, Exec::default()).err().unwrap();
    let msg = err.to_string();
    assert!(msg.contains("terminal compatibility"), "{msg}");
}

#[test]
fn witness_outside_the_shrunken_set_is_flagged() {
    let mut cfg = builtin("trivial_ball").unwrap();
    cfg.obstacle = ObstacleConfig::StaticBall {
        center: vec![2.0, 0.0],
        radius: 1.5,
    };
    cfg.witness = WitnessConfig::Zero { epsilon: 0.75 };
    cfg.terminal = TerminalConfig::Projected { point: vec![0.0, 0.0] };
    let result = Scenario::from_config(&cfg, Exec::default()).and_then(|s| s.check_assumptions());
    assert!(result.is_err());
}
