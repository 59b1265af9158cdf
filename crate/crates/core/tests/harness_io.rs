use obstacle_core::config::ScenarioConfig;
use obstacle_core::harness::{run, Command, RunOptions};
use obstacle_core::library::{builtin, names};
use obstacle_core::output::{emit, read_json, Format};
use obstacle_core::Error;

#[test]
fn json_round_trip_is_bit_exact() {
    let cfg = builtin("moving_box_example2").unwrap();
    let result = run(&cfg, Command::Ladder, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit(&result, dir.path(), Format::Json).unwrap();
    let back = read_json(&dir.path().join("result.json")).unwrap();
    assert_eq!(back, result);
    assert_eq!(back.hash(), result.hash());
}

#[test]
fn csv_tables_follow_the_ladder() {
    let cfg = builtin("growing_ball").unwrap();
    let result = run(&cfg, Command::Ladder, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit(&result, dir.path(), Format::Csv).unwrap();
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + cfg.ladder.levels.len());
    let u = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    let sol = result.solution.as_ref().unwrap();
    assert!(u.lines().next().unwrap().starts_with("# layout"));
    assert_eq!(u.lines().count(), 2 + sol.u.data().len());
    // The emitted config reproduces the run.
    let again = ScenarioConfig::from_path(dir.path().join("config.toml")).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn solve_without_ladder_emits_header_only_report() {
    let cfg = builtin("trivial_ball").unwrap();
    let result = run(&cfg, Command::Solve, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit(&result, dir.path(), Format::Csv).unwrap();
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1);
}

#[test]
fn fixed_seed_runs_hash_identically() {
    let cfg = builtin("psor_compare").unwrap();
    let a = run(&cfg, Command::Ladder, RunOptions::default()).unwrap();
    let b = run(&cfg, Command::Ladder, RunOptions::default()).unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = run(&cfg.clone().with_seed(cfg.seed + 1), Command::Ladder, RunOptions::default()).unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn errors_carry_the_scenario_name() {
    let mut cfg = builtin("heat_manufactured").unwrap();
    cfg.obstacle = obstacle_core::config::ObstacleConfig::StaticBall {
        center: vec![0.0],
        radius: 0.5,
    };
    let err = run(&cfg, Command::Solve, RunOptions::default()).unwrap_err();
    assert!(matches!(&err, Error::Scenario { scenario, .. } if scenario == "heat_manufactured"));
    assert!(matches!(err.root(), Error::Validation { field, .. } if field == "terminal"));
}

#[test]
fn syntax_and_semantic_errors_differ() {
    let text = obstacle_core::library::source("trivial_ball").unwrap();
    let broken = text.replace("steps = 16", "steps = 16\nsteps_extra = 1");
    assert!(matches!(ScenarioConfig::from_toml_str(&broken), Err(Error::Parse { line, .. }) if line > 1));
    let bad = text.replace("radius = 1.0", "radius = -1.0");
    assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Validation { .. })));
}

#[test]
fn every_knob_is_in_the_materialized_config() {
    let text = builtin("trivial_ball").unwrap().to_toml_string();
    let knobs = [
        "picard", "residual", "picard_max_iterations", "retry_halvings", "feasibility_factor",
        "certificate_factor", "decay_slack", "decay_floor", "feasibility_growth", "bound_factor",
        "active_band_factor", "no_contact_factor", "terminal_slack", "lipschitz_probes",
        "dykstra_tolerance", "dykstra_cap_factor", "hausdorff_directions_per_dim", "cg_tolerance",
        "cg_cap_factor", "levels", "solve_level", "paths", "dt", "start_time", "nodes", "c_disc",
        "chunk_size", "killing", "max_relative_error", "reference_tolerance", "heat_constant",
        "psor_omega", "psor_tolerance", "psor_max_sweeps", "perturbations", "perturbation_scale",
        "theta", "seed",
    ];
    for k in knobs {
        assert!(
            text.lines().any(|l| l.split('=').next().map(str::trim) == Some(k)),
            "{k} missing"
        );
    }
}

#[test]
fn builtins_pass_their_solve_checks() {
    for name in names() {
        let cfg = builtin(name).unwrap();
        let r = run(&cfg, Command::Solve, RunOptions::default()).unwrap();
        assert!(r.passed, "{name}: {:?}", r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    }
}
