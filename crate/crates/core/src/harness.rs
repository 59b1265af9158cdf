//! Runs a configured scenario for one subcommand and collects every number it
//! emits together with a named pass/fail outcome.

use serde::{Deserialize, Serialize};

use crate::checks::{active_band, certify, Certificates};
use crate::config::{ObstacleConfig, ReferenceKind, ScenarioConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ladder::{run_ladder_report, ConvergenceReport};
use crate::operator::{energy_norms, EnergyNorms};
use crate::problem::{AssumptionReport, Scenario};
use crate::psor::{heat_reference, psor_reference};
use crate::solver::{solve_penalized, solve_unconstrained, PenalizedSolution};
use crate::stochastic::{feynman_kac_check, sample_nodes, FkReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Ladder,
    Verify,
    McCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Ladder => "ladder",
            Command::Verify => "verify",
            Command::McCheck => "mc-check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    pub command: Command,
    /// SHA-256 of the canonical configuration text below.
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
    pub config: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl CheckOutcome {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            passed: value < threshold,
            value,
            threshold,
        }
    }

    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }

    fn flag(name: &str, passed: bool) -> Self {
        CheckOutcome {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub kind: ReferenceKind,
    pub max_error: f64,
    pub tolerance: f64,
    /// Smallest reaction density; only meaningful for lower obstacles.
    pub min_density: f64,
    pub active_band: f64,
    pub delta_active: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoContactComparison {
    pub total_variation: f64,
    pub max_difference: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub provenance: Provenance,
    pub assumptions: Option<AssumptionReport>,
    pub solution: Option<PenalizedSolution>,
    pub energy: Option<EnergyNorms>,
    pub report: Option<ConvergenceReport>,
    pub certificates: Option<Certificates>,
    pub reference: Option<ReferenceComparison>,
    pub no_contact: Option<NoContactComparison>,
    pub feynman_kac: Option<FkReport>,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl RunResult {
    /// SHA-256 of the JSON encoding; equal results hash equally.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("result serializes");
        crate::config::hex_digest(text.as_bytes())
    }
}

pub struct RunOptions {
    pub exec: Exec,
    /// A previously emitted result whose solution `verify` should check instead of re-solving.
    pub stored: Option<RunResult>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            exec: Exec::default(),
            stored: None,
        }
    }
}

fn solve_level(s: &Scenario) -> f64 {
    s.config
        .ladder
        .solve_level
        .or_else(|| s.config.ladder.levels.last().copied())
        .unwrap_or(0.0)
}

struct Collector {
    checks: Vec<CheckOutcome>,
}

impl Collector {
    fn assumptions(&mut self, a: &AssumptionReport, s: &Scenario) {
        self.checks.push(CheckOutcome::at_most(
            "terminal_compatibility",
            a.terminal_distance,
            s.config.tolerances.terminal_slack,
        ));
        self.checks.push(CheckOutcome::at_most(
            "obstacle_bounded",
            a.continuity.max_set_radius,
            a.continuity.uniform_bound,
        ));
        self.checks.push(CheckOutcome::at_most("driver_lipschitz", a.lipschitz_violation, 1e-9));
        if let Some(sep) = &a.separation {
            self.checks.push(CheckOutcome::flag("separation", sep.passed));
        }
    }

    fn certificates(&mut self, c: &Certificates) {
        self.checks.push(CheckOutcome::at_most("minimality", c.minimality_max, c.tolerance));
        self.checks.push(CheckOutcome::at_most("variational_inequality", c.vi_max, c.tolerance));
    }

    fn reference(&mut self, r: &ReferenceComparison, lower: bool) {
        let name = match r.kind {
            ReferenceKind::Heat => "heat_reference",
            _ => "psor_reference",
        };
        self.checks.push(CheckOutcome::at_most(name, r.max_error, r.tolerance));
        if lower {
            self.checks.push(CheckOutcome::at_most("density_nonnegative", -r.min_density, 0.0));
            self.checks.push(CheckOutcome::below("density_support", r.active_band, r.delta_active));
        }
    }

    fn no_contact(&mut self, n: &NoContactComparison, tol_feas: f64) {
        self.checks
            .push(CheckOutcome::below("no_contact_measure", n.total_variation, tol_feas));
        self.checks.push(CheckOutcome::below(
            "no_contact_equivalence",
            n.max_difference,
            1e-6 * n.scale,
        ));
    }
}

fn compare_reference(s: &Scenario, sol: &PenalizedSolution) -> Result<Option<ReferenceComparison>> {
    let checks = &s.config.checks;
    let time = &sol.time;
    let sets = s.sets(time);
    let (reference, tolerance) = match checks.reference {
        ReferenceKind::None => return Ok(None),
        ReferenceKind::Heat => {
            let h = s.grid.max_spacing();
            (heat_reference(s, time)?, checks.heat_constant * (h * h + time.dt()))
        }
        ReferenceKind::Psor => (psor_reference(s, time)?.u, checks.reference_tolerance),
    };
    let min_density = sol.density.data().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Some(ReferenceComparison {
        kind: checks.reference,
        max_error: sol.u.max_abs_diff(&reference),
        tolerance,
        min_density: if min_density.is_finite() { min_density } else { 0.0 },
        active_band: active_band(sol, &sets),
        delta_active: s.delta_active(),
    }))
}

fn compare_unconstrained(s: &Scenario, sol: &PenalizedSolution) -> Result<NoContactComparison> {
    let free = solve_unconstrained(s)?;
    let u = if free.time == sol.time {
        free.u
    } else {
        return Err(Error::Unsupported(
            "unconstrained solve needed a different time grid".into(),
        ));
    };
    Ok(NoContactComparison {
        total_variation: sol.total_variation(s.grid.cell_volume()),
        max_difference: sol.u.max_abs_diff(&u),
        scale: sol.u.max_abs().max(1.0),
    })
}

/// Runs `command` on the configured scenario; every enabled check lands in `checks`.
pub fn run(config: &ScenarioConfig, command: Command, opts: RunOptions) -> Result<RunResult> {
    let name = config.name.clone();
    run_inner(config, command, opts).map_err(|e| e.in_scenario(&name))
}

fn run_inner(config: &ScenarioConfig, command: Command, opts: RunOptions) -> Result<RunResult> {
    let s = Scenario::from_config(config, opts.exec)?;
    let provenance = Provenance {
        scenario: config.name.clone(),
        command,
        config_hash: config.hash(),
        seed: config.seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.to_toml_string(),
    };
    let assumptions = s.check_assumptions()?;
    let mut out = Collector { checks: Vec::new() };
    out.assumptions(&assumptions, &s);
    let lower = matches!(config.obstacle, ObstacleConfig::LowerObstacle { .. });

    let mut result = RunResult {
        provenance,
        assumptions: Some(assumptions),
        solution: None,
        energy: None,
        report: None,
        certificates: None,
        reference: None,
        no_contact: None,
        feynman_kac: None,
        checks: Vec::new(),
        passed: false,
    };

    let finish = |sol: &PenalizedSolution, out: &mut Collector, result: &mut RunResult| -> Result<()> {
        if let Some(r) = compare_reference(&s, sol)? {
            out.reference(&r, lower);
            result.reference = Some(r);
        }
        if config.checks.no_contact {
            let n = compare_unconstrained(&s, sol)?;
            out.no_contact(&n, s.tol_feas());
            result.no_contact = Some(n);
        }
        Ok(())
    };

    match command {
        Command::Solve | Command::McCheck => {
            let sol = solve_penalized(&s, solve_level(&s))?;
            let sets = s.sets(&sol.time);
            let cert = certify(&s, &sol, &sets)?;
            out.certificates(&cert);
            finish(&sol, &mut out, &mut result)?;
            if command == Command::McCheck {
                let nodes = sample_nodes(&s.grid, config.monte_carlo.nodes);
                let fk = feynman_kac_check(&s, &sol, &nodes)?;
                out.checks.push(CheckOutcome::flag("feynman_kac", fk.passed));
                result.feynman_kac = Some(fk);
            }
            result.energy = Some(energy_norms(&sol.u, &s.grid, &sol.time));
            result.certificates = Some(cert);
            result.solution = Some(sol);
        }
        Command::Ladder => {
            if config.ladder.levels.len() < 3 {
                return Err(Error::validation("ladder.levels", "need at least three rungs"));
            }
            let run = run_ladder_report(&s)?;
            let v = &run.report.verdict;
            out.checks.push(CheckOutcome::below("feasibility", v.feasibility_final, v.tol_feas));
            out.checks.push(CheckOutcome::flag("differences_decay", v.differences_decay));
            out.checks.push(CheckOutcome::flag("last_three_decay", v.last_three_decay));
            if config.checks.feasibility_decay {
                out.checks.push(CheckOutcome::flag("feasibility_nonincreasing", v.feasibility_nonincreasing));
            }
            if config.checks.energy_bound {
                out.checks.push(CheckOutcome::flag("energy_bounded", v.energy_bounded));
                out.checks.push(CheckOutcome::flag("tv_bounded", v.tv_bounded));
            }
            out.certificates(&run.report.certificates);
            let finest = run.finest().clone();
            finish(&finest, &mut out, &mut result)?;
            result.energy = Some(energy_norms(&finest.u, &s.grid, &finest.time));
            result.certificates = Some(run.report.certificates.clone());
            result.report = Some(run.report);
            result.solution = Some(finest);
        }
        Command::Verify => {
            let (sol, report) = match opts.stored {
                Some(stored) => {
                    if stored.provenance.config_hash != config.hash() {
                        return Err(Error::validation(
                            "solution",
                            "stored result was produced from a different configuration",
                        ));
                    }
                    let sol = stored
                        .solution
                        .ok_or_else(|| Error::validation("solution", "stored result holds no solution"))?;
                    (sol, stored.report)
                }
                None => {
                    let run = run_ladder_report(&s)?;
                    (run.finest().clone(), Some(run.report))
                }
            };
            let expected = (s.grid.num_interior(), s.components);
            if (sol.u.nodes(), sol.u.components()) != expected {
                return Err(Error::Shape("stored solution does not match the scenario grid".into()));
            }
            let sets = s.sets(&sol.time);
            let cert = certify(&s, &sol, &sets)?;
            out.certificates(&cert);
            if let (Some(report), true) = (&report, config.checks.energy_bound) {
                out.checks.push(CheckOutcome::flag("energy_bounded", report.verdict.energy_bounded));
                out.checks.push(CheckOutcome::flag("tv_bounded", report.verdict.tv_bounded));
            }
            result.energy = Some(energy_norms(&sol.u, &s.grid, &sol.time));
            result.certificates = Some(cert);
            result.report = report;
            result.solution = Some(sol);
        }
    }
    result.passed = out.checks.iter().all(|c| c.passed);
    result.checks = out.checks;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::builtin;

    #[test]
    fn trivial_ladder_passes_with_zero_measure() {
        let cfg = builtin("trivial_ball").unwrap();
        let r = run(&cfg, Command::Ladder, RunOptions::default()).unwrap();
        assert!(r.passed, "{:?}", r.checks);
        let sol = r.solution.as_ref().unwrap();
        assert_eq!(sol.density.max_abs(), 0.0);
        assert_eq!(r.report.as_ref().unwrap().rows.len(), 5);
    }

    #[test]
    fn verify_rejects_foreign_solution() {
        let cfg = builtin("trivial_ball").unwrap();
        let stored = run(&cfg, Command::Solve, RunOptions::default()).unwrap();
        let ok = run(
            &cfg,
            Command::Verify,
            RunOptions {
                stored: Some(stored.clone()),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(ok.passed);
        let other = cfg.clone().with_seed(99);
        let err = run(
            &other,
            Command::Verify,
            RunOptions {
                stored: Some(stored),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err.root(), Error::Validation { field, .. } if field == "solution"));
    }
}
