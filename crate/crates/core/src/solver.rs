//! Backward theta-scheme for the penalized system
//! `du/dt + L u = -f_u + n (u - Pi_D(u))`, `u(T) = phi`.
//!
//! Each implicit step is solved by a semismooth Newton iteration on the
//! penalty (the projection's generalized Jacobian is available in closed
//! form for every set representation) with the driver lagged by one
//! iterate. The linearized systems are symmetric positive definite.

use serde::{Deserialize, Serialize};

use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::geometry::ConvexSet;
use crate::grid::{SpaceTimeField, TimeGrid};
use crate::operator::{assemble, DiscreteOperator, StepMatrix};
use crate::problem::Scenario;

/// Penalized solution `u_n` with its reaction density `-n (u_n - Pi_D(u_n))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenalizedSolution {
    pub penalty: f64,
    /// Time grid the solution lives on (finer than the scenario's after retries).
    pub time: TimeGrid,
    pub halvings: usize,
    pub u: SpaceTimeField,
    pub density: SpaceTimeField,
    /// `sigma grad u^i` per node, layout `[c * d + axis]` within a node.
    pub sigma_grad: SpaceTimeField,
    pub max_step_residual: f64,
    pub nonlinear_iterations: usize,
    pub linear_iterations: usize,
}

impl PenalizedSolution {
    /// `|mu_n|(E_{0,T})`: absolute density times cell volume times step, over implicit slices.
    pub fn total_variation(&self, cell_volume: f64) -> f64 {
        let dt = self.time.dt();
        (0..self.time.steps())
            .map(|k| self.density.slice(k).iter().map(|v| v.abs()).sum::<f64>())
            .sum::<f64>()
            * dt
            * cell_volume
    }

    /// Restriction of `u` to a coarser grid with `stride` times the step.
    pub fn u_on(&self, stride: usize) -> SpaceTimeField {
        if stride == 1 {
            self.u.clone()
        } else {
            self.u.subsample(stride)
        }
    }

    /// Stride from the scenario grid to this solution's grid.
    pub fn stride(&self) -> usize {
        1 << self.halvings
    }
}

/// Operators per slice, assembled once when the coefficient is autonomous.
pub(crate) struct Operators {
    ops: Vec<DiscreteOperator>,
    shared: bool,
}

impl Operators {
    pub(crate) fn new(s: &Scenario, time: &TimeGrid) -> Result<Self> {
        let a = s.coefficient.as_ref();
        if a.autonomous() {
            Ok(Operators {
                ops: vec![assemble(a, &s.grid, 0.0, s.exec)?],
                shared: true,
            })
        } else {
            let ops: Result<Vec<_>> = (0..time.slices())
                .map(|k| assemble(a, &s.grid, time.time(k), s.exec))
                .collect();
            Ok(Operators {
                ops: ops?,
                shared: false,
            })
        }
    }

    pub(crate) fn at(&self, k: usize) -> &DiscreteOperator {
        if self.shared {
            &self.ops[0]
        } else {
            &self.ops[k]
        }
    }
}

/// Evaluates `F(t, x_i, u_i, sigma grad u)` at every interior node of one slice.
pub(crate) struct SliceDriver<'a> {
    scenario: &'a Scenario,
    t: f64,
    points: &'a [Vec<f64>],
    sigma: Option<Vec<[[f64; 2]; 2]>>,
}

impl<'a> SliceDriver<'a> {
    pub(crate) fn new(scenario: &'a Scenario, t: f64, points: &'a [Vec<f64>]) -> Self {
        let sigma = scenario
            .driver
            .uses_gradient()
            .then(|| points.iter().map(|x| scenario.coefficient.sigma(t, x).m).collect());
        SliceDriver {
            scenario,
            t,
            points,
            sigma,
        }
    }

    /// `sigma grad u` at every node, layout `[(node * m + c) * d + axis]`.
    pub(crate) fn sigma_gradients(&self, u: &[f64]) -> Vec<f64> {
        let s = self.scenario;
        let m = s.components;
        let d = s.grid.dim();
        let g = s.grid.interior_gradients(u, m);
        let mut out = vec![0.0; g.len()];
        for i in 0..self.points.len() {
            let sig = match &self.sigma {
                Some(sig) => sig[i],
                None => s.coefficient.sigma(self.t, &self.points[i]).m,
            };
            for c in 0..m {
                let base = (i * m + c) * d;
                for a in 0..d {
                    out[base + a] = (0..d).map(|b| sig[a][b] * g[base + b]).sum();
                }
            }
        }
        out
    }

    pub(crate) fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let s = self.scenario;
        let m = s.components;
        let d = s.grid.dim();
        let z = if self.sigma.is_some() {
            self.sigma_gradients(u)
        } else {
            vec![0.0; u.len() * d]
        };
        let mut out = vec![0.0; u.len()];
        for i in 0..self.points.len() {
            let r = i * m..(i + 1) * m;
            s.driver.eval(
                self.t,
                &self.points[i],
                &u[r.clone()],
                &z[i * m * d..(i + 1) * m * d],
                &mut out[r],
            );
        }
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                time: self.t,
                node: bad / m,
            });
        }
        Ok(out)
    }
}

/// Projections and Jacobians of one slice.
fn project_slice(sets: &[ConvexSet], u: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut p = Vec::with_capacity(u.len());
    let mut jac = Vec::with_capacity(u.len() * m);
    for (i, set) in sets.iter().enumerate() {
        let (x, j) = set.project_with_jacobian(&u[i * m..(i + 1) * m]);
        p.extend(x);
        jac.extend(j);
    }
    (p, jac)
}

pub fn project_field(sets: &[ConvexSet], u: &[f64], m: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(u.len());
    for (i, set) in sets.iter().enumerate() {
        p.extend(set.project(&u[i * m..(i + 1) * m]));
    }
    p
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct StepState {
    u: Vec<f64>,
    residual: Vec<f64>,
    projection: Vec<f64>,
    jacobian: Vec<f64>,
    drive: Vec<f64>,
}

struct StepProblem<'a> {
    op: &'a DiscreteOperator,
    sets: &'a [ConvexSet],
    driver: SliceDriver<'a>,
    /// `w + (1 - theta) dt A_{k+1} w`.
    explicit: Vec<f64>,
    scale: f64,
    dt: f64,
    penalty: f64,
    m: usize,
}

impl StepProblem<'_> {
    /// `R(u) = u - theta dt A u - e - dt (F(u) - n (u - Pi u))`.
    fn state(&self, u: Vec<f64>) -> Result<StepState> {
        let (projection, jacobian) = project_slice(self.sets, &u, self.m);
        let drive = self.driver.eval(&u)?;
        let au = self.op.apply_interleaved(&u, self.m);
        let residual = (0..u.len())
            .map(|j| {
                let reaction = -self.penalty * (u[j] - projection[j]);
                u[j] - self.scale * au[j] - self.explicit[j] - self.dt * (drive[j] + reaction)
            })
            .collect();
        Ok(StepState {
            u,
            residual,
            projection,
            jacobian,
            drive,
        })
    }
}

/// Solves one implicit step; returns the state, iteration count and linear iterations.
fn solve_step(
    problem: &StepProblem,
    initial: Vec<f64>,
    step: usize,
    s: &Scenario,
) -> Result<(StepState, usize, usize)> {
    let tol = &s.config.tolerances;
    let m = problem.m;
    let nodes = problem.sets.len();
    let nd = problem.penalty * problem.dt;
    let mut state = problem.state(initial)?;
    let mut linear = 0;
    for iteration in 1..=tol.picard_max_iterations {
        let mut blocks = vec![0.0; nodes * m * m];
        let mut rhs = vec![0.0; nodes * m];
        for i in 0..nodes {
            for r in 0..m {
                let row = i * m + r;
                let mut ju = 0.0;
                for c in 0..m {
                    let jrc = state.jacobian[(i * m + r) * m + c];
                    blocks[(i * m + r) * m + c] = nd * (if r == c { 1.0 } else { 0.0 } - jrc);
                    ju += jrc * state.u[i * m + c];
                }
                rhs[row] = problem.explicit[row]
                    + problem.dt * state.drive[row]
                    + nd * (state.projection[row] - ju);
            }
        }
        let system = StepMatrix {
            op: problem.op,
            scale: problem.scale,
            components: m,
            blocks: Some(&blocks),
        };
        let solved = system.solve(&rhs, &s.config.linear_solver)?;
        linear += solved.iterations;
        let candidate = solved.solution;

        let current = max_abs(&state.residual);
        let mut lambda = 1.0;
        let mut trial = problem.state(candidate.clone())?;
        while max_abs(&trial.residual) > current && max_abs(&trial.residual) > tol.residual && lambda > 1.0 / 256.0 {
            lambda *= 0.5;
            let mixed: Vec<f64> = state
                .u
                .iter()
                .zip(&candidate)
                .map(|(a, b)| a + lambda * (b - a))
                .collect();
            trial = problem.state(mixed)?;
        }
        let change = state
            .u
            .iter()
            .zip(&trial.u)
            .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs()));
        state = trial;
        let scale = max_abs(&state.u).max(1.0);
        if change <= tol.picard * scale && max_abs(&state.residual) <= tol.residual {
            return Ok((state, iteration, linear));
        }
    }
    Err(Error::PicardDiverged {
        step,
        residual: max_abs(&state.residual),
    })
}

fn solve_on_grid(s: &Scenario, penalty: f64, time: &TimeGrid) -> Result<PenalizedSolution> {
    let m = s.components;
    let d = s.grid.dim();
    let nodes = s.grid.num_interior();
    let sets = s.sets(time);
    let ops = Operators::new(s, time)?;
    let points = s.grid.interior_points();
    let dt = time.dt();
    let theta = s.theta;

    let mut u = SpaceTimeField::zeros(time.slices(), nodes, m);
    let mut density = SpaceTimeField::zeros(time.slices(), nodes, m);
    let mut sigma_grad = SpaceTimeField::zeros(time.slices(), nodes, m * d);
    let last = time.steps();
    u.slice_mut(last).copy_from_slice(&s.terminal);
    let mut max_residual: f64 = 0.0;
    let mut nonlinear = 0;
    let mut linear = 0;

    for k in (0..last).rev() {
        let w = u.slice(k + 1).to_vec();
        let mut explicit = w.clone();
        if theta < 1.0 {
            let aw = ops.at(k + 1).apply_interleaved(&w, m);
            for (e, a) in explicit.iter_mut().zip(&aw) {
                *e += (1.0 - theta) * dt * a;
            }
        }
        let problem = StepProblem {
            op: ops.at(k),
            sets: &sets[k],
            driver: SliceDriver::new(s, time.time(k), &points),
            explicit,
            scale: theta * dt,
            dt,
            penalty,
            m,
        };
        let (state, iters, lin) = solve_step(&problem, w, k, s)?;
        nonlinear += iters;
        linear += lin;
        max_residual = max_residual.max(max_abs(&state.residual));
        let dens: Vec<f64> = state
            .u
            .iter()
            .zip(&state.projection)
            .map(|(a, p)| -penalty * (a - p))
            .collect();
        density.slice_mut(k).copy_from_slice(&dens);
        let grads = problem.driver.sigma_gradients(&state.u);
        sigma_grad.slice_mut(k).copy_from_slice(&grads);
        u.slice_mut(k).copy_from_slice(&state.u);
    }
    let terminal_projection = project_field(&sets[last], &s.terminal, m);
    let dens: Vec<f64> = s
        .terminal
        .iter()
        .zip(&terminal_projection)
        .map(|(a, p)| -penalty * (a - p))
        .collect();
    density.slice_mut(last).copy_from_slice(&dens);
    let grads = SliceDriver::new(s, time.horizon(), &points).sigma_gradients(&s.terminal);
    sigma_grad.slice_mut(last).copy_from_slice(&grads);

    Ok(PenalizedSolution {
        penalty,
        time: *time,
        halvings: 0,
        u,
        density,
        sigma_grad,
        max_step_residual: max_residual,
        nonlinear_iterations: nonlinear,
        linear_iterations: linear,
    })
}

/// Solves the penalized problem at level `n`, halving the step on divergence.
pub fn solve_penalized(s: &Scenario, penalty: f64) -> Result<PenalizedSolution> {
    if !(penalty.is_finite() && penalty >= 0.0) {
        return Err(Error::validation("penalty", "must be finite and nonnegative"));
    }
    let retries = s.config.tolerances.retry_halvings;
    let mut halvings = 0;
    loop {
        let time = s.time.refined(1 << halvings);
        match solve_on_grid(s, penalty, &time) {
            Ok(mut sol) => {
                sol.halvings = halvings;
                return Ok(sol);
            }
            Err(Error::PicardDiverged { .. }) if halvings < retries => halvings += 1,
            Err(Error::PicardDiverged { step, residual }) => {
                return Err(Error::PicardDiverged {
                    step: step >> halvings,
                    residual,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// The same scheme without the penalty term.
pub fn solve_unconstrained(s: &Scenario) -> Result<PenalizedSolution> {
    solve_penalized(s, 0.0)
}
