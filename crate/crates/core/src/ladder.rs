//! The penalization ladder `n_1 < n_2 < ...` and its convergence diagnostics.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checks::{
    active_band, certify, feasibility_l2, gradient_distance, l2_distance, weak_pairing,
    within_factor_of_median, Certificates,
};
use crate::error::{Error, Result};
use crate::operator::{energy_norms, EnergyNorms};
use crate::problem::Scenario;
use crate::solver::{solve_penalized, PenalizedSolution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub penalty: f64,
    pub halvings: usize,
    pub energy: EnergyNorms,
    /// `||u_n - u_prev||` in `L^2(0,T;H)` on the scenario grid; absent on the first rung.
    pub diff_l2: Option<f64>,
    pub diff_grad: Option<f64>,
    pub feasibility_l2: f64,
    pub total_variation: f64,
    pub minimality: f64,
    pub variational_inequality: f64,
    pub weak_pairing: f64,
    pub nonlinear_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderVerdict {
    pub tol_feas: f64,
    pub feasibility_final: f64,
    pub feasibility_ok: bool,
    pub feasibility_nonincreasing: bool,
    pub differences_decay: bool,
    pub gradient_decay: bool,
    /// Decay across the last three rungs, the condition whose failure is fatal.
    pub last_three_decay: bool,
    pub energy_bounded: bool,
    pub tv_bounded: bool,
    /// `max energy / (|phi|^2 + |f(.,.,0,0)|^2)`, or the raw energy when the data vanish.
    pub energy_constant: f64,
    pub certificates_ok: bool,
    pub delta_active: f64,
    pub active_band: f64,
    pub active_support_ok: bool,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<LadderRow>,
    pub verdict: LadderVerdict,
    /// Certificates at the finest rung, one row per test function.
    pub certificates: Certificates,
}

pub struct LadderRun {
    pub solutions: Vec<PenalizedSolution>,
    pub report: ConvergenceReport,
    /// Wall-clock seconds per rung; kept apart from the report so that it stays reproducible.
    pub seconds: Vec<f64>,
}

impl LadderRun {
    pub fn finest(&self) -> &PenalizedSolution {
        self.solutions.last().expect("ladder has rungs")
    }
}

fn decays(values: &[f64], slack: f64, floor: f64) -> bool {
    values.windows(2).all(|w| w[1] <= slack * w[0] + floor)
}

struct Rung {
    solution: PenalizedSolution,
    energy: EnergyNorms,
    feasibility: f64,
    tv: f64,
    certificates: Certificates,
    pairing: f64,
    active_band: f64,
    seconds: f64,
}

fn run_rung(s: &Scenario, penalty: f64) -> Result<Rung> {
    let start = Instant::now();
    let solution = solve_penalized(s, penalty)?;
    let sets = s.sets(&solution.time);
    let energy = energy_norms(&solution.u, &s.grid, &solution.time);
    let feasibility = feasibility_l2(&solution.u, &sets, &s.grid, &solution.time);
    let tv = solution.total_variation(s.grid.cell_volume());
    let certificates = certify(s, &solution, &sets)?;
    let pairing = weak_pairing(&solution, &s.grid);
    let band = active_band(&solution, &sets);
    Ok(Rung {
        solution,
        energy,
        feasibility,
        tv,
        certificates,
        pairing,
        active_band: band,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every rung and evaluates the diagnostics; never fails on a bad verdict.
pub fn run_ladder_report(s: &Scenario) -> Result<LadderRun> {
    let levels = s.config.ladder.levels.clone();
    let rungs: Vec<Result<Rung>> = s.exec.map(levels.len(), |j| run_rung(s, levels[j]));
    let rungs: Vec<Rung> = rungs.into_iter().collect::<Result<_>>()?;
    let tol = &s.config.tolerances;

    let coarse: Vec<_> = rungs.iter().map(|r| r.solution.u_on(r.solution.stride())).collect();
    let mut rows = Vec::with_capacity(rungs.len());
    for (j, r) in rungs.iter().enumerate() {
        let (diff_l2, diff_grad) = if j == 0 {
            (None, None)
        } else {
            (
                Some(l2_distance(&coarse[j], &coarse[j - 1], &s.grid, &s.time)),
                Some(gradient_distance(&coarse[j], &coarse[j - 1], &s.grid, &s.time)),
            )
        };
        rows.push(LadderRow {
            penalty: r.solution.penalty,
            halvings: r.solution.halvings,
            energy: r.energy,
            diff_l2,
            diff_grad,
            feasibility_l2: r.feasibility,
            total_variation: r.tv,
            minimality: r.certificates.minimality_max,
            variational_inequality: r.certificates.vi_max,
            weak_pairing: r.pairing,
            nonlinear_iterations: r.solution.nonlinear_iterations,
        });
    }

    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.diff_l2).collect();
    let grads: Vec<f64> = rows.iter().filter_map(|r| r.diff_grad).collect();
    let feas: Vec<f64> = rows.iter().map(|r| r.feasibility_l2).collect();
    let energies: Vec<f64> = rows.iter().map(|r| r.energy.total()).collect();
    let tvs: Vec<f64> = rows.iter().map(|r| r.total_variation).collect();
    let floor = tol.decay_floor;
    let last_three = if diffs.len() >= 2 {
        decays(&diffs[diffs.len() - 2..], tol.decay_slack, floor)
    } else {
        true
    };
    let tol_feas = s.tol_feas();
    let finest = rungs.last().expect("nonempty ladder");
    let data = s.terminal_norm_sq() + s.source_norm_sq();
    let max_energy = energies.iter().copied().fold(0.0, f64::max);
    let mut verdict = LadderVerdict {
        tol_feas,
        feasibility_final: finest.feasibility,
        feasibility_ok: finest.feasibility < tol_feas,
        feasibility_nonincreasing: feas
            .windows(2)
            .all(|w| w[1] <= w[0] * tol.feasibility_growth + floor),
        differences_decay: decays(&diffs, tol.decay_slack, floor),
        gradient_decay: decays(&grads, tol.decay_slack, floor),
        last_three_decay: last_three,
        energy_bounded: within_factor_of_median(&energies, tol.bound_factor),
        tv_bounded: within_factor_of_median(&tvs, tol.bound_factor),
        energy_constant: if data > 0.0 { max_energy / data } else { max_energy },
        certificates_ok: finest.certificates.passed,
        delta_active: s.delta_active(),
        active_band: finest.active_band,
        active_support_ok: finest.active_band < s.delta_active(),
        success: false,
    };
    verdict.success = verdict.feasibility_ok && verdict.differences_decay && verdict.last_three_decay;
    let certificates = finest.certificates.clone();
    let seconds = rungs.iter().map(|r| r.seconds).collect();
    Ok(LadderRun {
        solutions: rungs.into_iter().map(|r| r.solution).collect(),
        report: ConvergenceReport {
            rows,
            verdict,
            certificates,
        },
        seconds,
    })
}

/// Runs the ladder and fails when successive differences stop decaying.
pub fn run_ladder(s: &Scenario) -> Result<LadderRun> {
    if s.config.ladder.levels.len() < 3 {
        return Err(Error::validation("ladder.levels", "need at least three rungs"));
    }
    let run = run_ladder_report(s)?;
    if !run.report.verdict.last_three_decay {
        let d: Vec<f64> = run.report.rows.iter().filter_map(|r| r.diff_l2).collect();
        return Err(Error::NotConverging(format!(
            "successive differences {:?} grow beyond slack {}",
            &d[d.len().saturating_sub(2)..],
            s.config.tolerances.decay_slack
        )));
    }
    Ok(run)
}
