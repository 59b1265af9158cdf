//! Reference solutions: projected SOR for the discrete single-component
//! obstacle problem, and the closed-form heat solution.

use serde::{Deserialize, Serialize};

use crate::config::TerminalConfig;
use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::geometry::ConvexSet;
use crate::grid::{SpaceTimeField, TimeGrid};
use crate::problem::Scenario;
use crate::solver::Operators;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsorSolution {
    pub u: SpaceTimeField,
    pub sweeps: usize,
}

/// Solves, slice by slice, the complementarity problem
/// `lo <= u <= hi`, `M u - b` of the sign dictated by the active bound,
/// with `M = I - theta dt A` and `b = w + (1 - theta) dt A w + dt f(t, x, 0, 0)`.
pub fn psor_reference(s: &Scenario, time: &TimeGrid) -> Result<PsorSolution> {
    if s.components != 1 {
        return Err(Error::Unsupported("projected SOR reference needs a single component".into()));
    }
    if s.driver.uses_gradient() || s.driver.lipschitz().0 != 0.0 {
        return Err(Error::Unsupported(
            "projected SOR reference needs a driver independent of y and z".into(),
        ));
    }
    let checks = &s.config.checks;
    let sets = s.sets(time);
    let ops = Operators::new(s, time)?;
    let points = s.grid.interior_points();
    let n = points.len();
    let dt = time.dt();
    let theta = s.theta;
    let mut u = SpaceTimeField::zeros(time.slices(), n, 1);
    u.slice_mut(time.steps()).copy_from_slice(&s.terminal);
    let mut sweeps_total = 0;
    let mut f = [0.0];
    for k in (0..time.steps()).rev() {
        let bounds: Vec<(f64, f64)> = sets[k]
            .iter()
            .map(|set| match set {
                ConvexSet::Box(b) => Ok((b.lower()[0], b.upper()[0])),
                _ => Err(Error::Unsupported("projected SOR reference needs box obstacles".into())),
            })
            .collect::<Result<_>>()?;
        let w = u.slice(k + 1).to_vec();
        let op = ops.at(k);
        let aw = ops.at(k + 1).apply(&w);
        let t = time.time(k);
        let b: Vec<f64> = (0..n)
            .map(|i| {
                s.driver.eval(t, &points[i], &[0.0], &[0.0, 0.0], &mut f);
                w[i] + (1.0 - theta) * dt * aw[i] + dt * f[0]
            })
            .collect();
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                op.row(i)
                    .map(|(j, a)| (j, if i == j { 1.0 } else { 0.0 } - theta * dt * a))
                    .collect()
            })
            .collect();
        let diag: Vec<f64> = (0..n).map(|i| 1.0 - theta * dt * op.get(i, i)).collect();
        let mut x: Vec<f64> = w.iter().zip(&bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
        let mut converged = false;
        for _ in 0..checks.psor_max_sweeps {
            sweeps_total += 1;
            let mut change: f64 = 0.0;
            for i in 0..n {
                let mx: f64 = rows[i].iter().map(|(j, m)| m * x[*j]).sum();
                let next = (x[i] + checks.psor_omega * (b[i] - mx) / diag[i]).clamp(bounds[i].0, bounds[i].1);
                change = change.max((next - x[i]).abs());
                x[i] = next;
            }
            if change <= checks.psor_tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SolverDiverged {
                iterations: checks.psor_max_sweeps,
                residual: f64::NAN,
            });
        }
        u.slice_mut(k).copy_from_slice(&x);
    }
    Ok(PsorSolution {
        u,
        sweeps: sweeps_total,
    })
}

/// `u^i(t, x) = amplitude_i exp(-(T - t) lambda / 2) prod_k sin(pi xi_k)` for identity
/// coefficient, zero driver and sine terminal data, with `lambda = sum_k (pi / L_k)^2`.
pub fn heat_reference(s: &Scenario, time: &TimeGrid) -> Result<SpaceTimeField> {
    let amplitude = match &s.config.terminal {
        TerminalConfig::Sine { amplitude } => amplitude.clone(),
        _ => return Err(Error::Unsupported("heat reference needs sine terminal data".into())),
    };
    let d = s.grid.dim();
    let id = crate::coefficient::SymTensor::identity(d);
    let probe = s.grid.interior_point(0);
    if !s.coefficient.autonomous() || s.coefficient.at(0.0, &probe) != id {
        return Err(Error::Unsupported("heat reference needs the identity coefficient".into()));
    }
    if s.driver.lipschitz() != (0.0, 0.0) || s.source_norm_sq() != 0.0 {
        return Err(Error::Unsupported("heat reference needs the zero driver".into()));
    }
    let lambda: f64 = (0..d)
        .map(|k| (std::f64::consts::PI / (s.grid.upper()[k] - s.grid.lower()[k])).powi(2))
        .sum();
    let m = s.components;
    let points = s.grid.interior_points();
    let mut out = SpaceTimeField::zeros(time.slices(), points.len(), m);
    for k in 0..time.slices() {
        let decay = (-(time.horizon() - time.time(k)) * lambda / 2.0).exp();
        let slice = out.slice_mut(k);
        for (i, x) in points.iter().enumerate() {
            let p: f64 = (0..d)
                .map(|a| (std::f64::consts::PI * (x[a] - s.grid.lower()[a]) / (s.grid.upper()[a] - s.grid.lower()[a])).sin())
                .product();
            for c in 0..m {
                slice[i * m + c] = amplitude[c] * decay * p;
            }
        }
    }
    Ok(out)
}
