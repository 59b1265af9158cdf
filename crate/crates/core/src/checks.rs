//! Certificates evaluated on a computed penalized solution: minimality of
//! the reaction measure, the parabolic variational inequality, feasibility
//! and the support of the reaction density.
//!
//! Time integrals use the rectangle rule on the implicit slices `t_0 ..
//! t_{N-1}`, the same quadrature the scheme itself is built on, so both
//! residuals are nonpositive for the discrete solution up to its step
//! residual.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexSet;
use crate::grid::{SpaceTimeField, SpatialGrid, TimeGrid};
use crate::problem::Scenario;
use crate::solver::{project_field, Operators, PenalizedSolution, SliceDriver};

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn trapezoid_weight(k: usize, steps: usize) -> f64 {
    if k == 0 || k == steps {
        0.5
    } else {
        1.0
    }
}

/// `||a - b||` in `L^2(0, T; H)`, trapezoidal in time.
pub fn l2_distance(a: &SpaceTimeField, b: &SpaceTimeField, grid: &SpatialGrid, time: &TimeGrid) -> f64 {
    let vol = grid.cell_volume();
    let mut total = 0.0;
    for k in 0..time.slices() {
        let s: f64 = a.slice(k).iter().zip(b.slice(k)).map(|(x, y)| (x - y).powi(2)).sum();
        total += trapezoid_weight(k, time.steps()) * time.dt() * vol * s;
    }
    total.sqrt()
}

/// `||grad (a - b)||` in `L^2(0, T; H)` with central differences.
pub fn gradient_distance(a: &SpaceTimeField, b: &SpaceTimeField, grid: &SpatialGrid, time: &TimeGrid) -> f64 {
    let vol = grid.cell_volume();
    let m = a.components();
    let mut total = 0.0;
    for k in 0..time.slices() {
        let diff: Vec<f64> = a.slice(k).iter().zip(b.slice(k)).map(|(x, y)| x - y).collect();
        let g = grid.interior_gradients(&diff, m);
        total += trapezoid_weight(k, time.steps()) * time.dt() * vol * g.iter().map(|v| v * v).sum::<f64>();
    }
    total.sqrt()
}

/// `||dist(u, D)||` in `L^2(E_{0,T})`.
pub fn feasibility_l2(u: &SpaceTimeField, sets: &[Vec<ConvexSet>], grid: &SpatialGrid, time: &TimeGrid) -> f64 {
    let vol = grid.cell_volume();
    let m = u.components();
    let mut total = 0.0;
    for k in 0..time.slices() {
        let s: f64 = sets[k]
            .iter()
            .enumerate()
            .map(|(i, set)| set.dist(&u.slice(k)[i * m..(i + 1) * m]).powi(2))
            .sum();
        total += trapezoid_weight(k, time.steps()) * time.dt() * vol * s;
    }
    total.sqrt()
}

/// Largest `dist(v, D)` over the field, with its slice and node.
pub fn worst_infeasibility(v: &SpaceTimeField, sets: &[Vec<ConvexSet>]) -> (f64, usize, usize) {
    let m = v.components();
    let mut worst = (0.0, 0, 0);
    for (k, slice_sets) in sets.iter().enumerate() {
        for (i, set) in slice_sets.iter().enumerate() {
            let d = set.dist(&v.slice(k)[i * m..(i + 1) * m]);
            if d > worst.0 {
                worst = (d, k, i);
            }
        }
    }
    worst
}

fn require_admissible(v: &SpaceTimeField, sets: &[Vec<ConvexSet>]) -> Result<()> {
    let (d, k, i) = worst_infeasibility(v, sets);
    let scale = 1.0 + v.max_abs();
    if d > 1e-9 * scale {
        return Err(Error::TestFunctionInfeasible {
            step: k,
            node: i,
            distance: d,
        });
    }
    Ok(())
}

/// `R(t_k) = int_{t_k}^T int_E <u - h, d mu>` for every lower limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalityResidual {
    pub per_time: Vec<f64>,
    pub max: f64,
}

pub fn check_minimality(
    sol: &PenalizedSolution,
    h: &SpaceTimeField,
    sets: &[Vec<ConvexSet>],
    grid: &SpatialGrid,
) -> Result<MinimalityResidual> {
    if !h.same_shape(&sol.u) {
        return Err(Error::Shape("test function does not match the solution grid".into()));
    }
    require_admissible(h, sets)?;
    let steps = sol.time.steps();
    let weight = sol.time.dt() * grid.cell_volume();
    let mut per_time = vec![0.0; steps + 1];
    let mut acc = 0.0;
    for k in (0..steps).rev() {
        let u = sol.u.slice(k);
        let hk = h.slice(k);
        let mu = sol.density.slice(k);
        let s: f64 = (0..u.len()).map(|j| (u[j] - hk[j]) * mu[j]).sum();
        acc += weight * s;
        per_time[k] = acc;
    }
    let max = per_time.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MinimalityResidual { per_time, max })
}

/// `LHS - 1/2 |v(T) - phi|_H^2` of the parabolic variational inequality.
pub fn check_variational_inequality(
    s: &Scenario,
    sol: &PenalizedSolution,
    v: &SpaceTimeField,
    sets: &[Vec<ConvexSet>],
) -> Result<f64> {
    if !v.same_shape(&sol.u) {
        return Err(Error::Shape("test function does not match the solution grid".into()));
    }
    require_admissible(v, sets)?;
    let time = &sol.time;
    let m = s.components;
    let dt = time.dt();
    let vol = s.grid.cell_volume();
    let theta = s.theta;
    let ops = Operators::new(s, time)?;
    let points = s.grid.interior_points();
    let mut lhs = 0.0;
    let mut a_next = ops.at(time.steps()).apply_interleaved(sol.u.slice(time.steps()), m);
    for k in (0..time.steps()).rev() {
        let u = sol.u.slice(k);
        let a_here = ops.at(k).apply_interleaved(u, m);
        let drive = SliceDriver::new(s, time.time(k), &points).eval(u)?;
        let (vk, vn) = (v.slice(k), v.slice(k + 1));
        let mut term = 0.0;
        for j in 0..u.len() {
            let w = vk[j] - u[j];
            let au = theta * a_here[j] + (1.0 - theta) * a_next[j];
            term += ((vn[j] - vk[j]) / dt + au + drive[j]) * w;
        }
        lhs += dt * vol * term;
        a_next = a_here;
    }
    let last = v.slice(time.steps());
    let terminal: f64 = last.iter().zip(&s.terminal).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(lhs - 0.5 * vol * terminal)
}

/// The admissible test functions used for the minimality and VI residuals.
pub fn test_family(s: &Scenario, sol: &PenalizedSolution, sets: &[Vec<ConvexSet>]) -> Vec<(String, SpaceTimeField)> {
    let m = s.components;
    let time = &sol.time;
    let mut family = Vec::new();
    let project = |field: &SpaceTimeField| -> SpaceTimeField {
        let mut out = SpaceTimeField::zeros(field.slices(), field.nodes(), m);
        for k in 0..field.slices() {
            out.slice_mut(k).copy_from_slice(&project_field(&sets[k], field.slice(k), m));
        }
        out
    };
    if let Some(w) = s.witness(time) {
        if require_admissible(&w.values, sets).is_ok() {
            family.push(("witness".to_string(), w.values.clone()));
        }
        family.push(("projected_witness".to_string(), project(&w.values)));
    }
    let zero = SpaceTimeField::zeros(time.slices(), sol.u.nodes(), m);
    if worst_infeasibility(&zero, sets).0 == 0.0 {
        family.push(("zero".to_string(), zero));
    }
    family.push(("projected_solution".to_string(), project(&sol.u)));
    let checks = &s.config.checks;
    let delta = checks.perturbation_scale * sol.u.max_abs().max(1.0);
    for j in 0..checks.perturbations {
        let mut rng = ChaCha8Rng::seed_from_u64(s.config.seed.wrapping_add(0x9e37_79b9 * (j as u64 + 1)));
        let noisy: Vec<f64> = sol
            .u
            .data()
            .iter()
            .map(|v| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                v + delta * xi
            })
            .collect();
        let field = SpaceTimeField::from_vec(time.slices(), sol.u.nodes(), m, noisy).expect("shape");
        family.push((format!("perturbed_{j}"), project(&field)));
    }
    family
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub test_function: String,
    pub minimality: f64,
    pub variational_inequality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub rows: Vec<CertificateRow>,
    pub minimality_max: f64,
    pub vi_max: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Minimality and VI residuals over the whole admissible family.
pub fn certify(s: &Scenario, sol: &PenalizedSolution, sets: &[Vec<ConvexSet>]) -> Result<Certificates> {
    let family = test_family(s, sol, sets);
    let rows: Vec<Result<CertificateRow>> = s.exec.map(family.len(), |j| {
        let (name, v) = &family[j];
        Ok(CertificateRow {
            test_function: name.clone(),
            minimality: check_minimality(sol, v, sets, &s.grid)?.max,
            variational_inequality: check_variational_inequality(s, sol, v, sets)?,
        })
    });
    let rows: Vec<CertificateRow> = rows.into_iter().collect::<Result<_>>()?;
    let minimality_max = rows.iter().map(|r| r.minimality).fold(f64::NEG_INFINITY, f64::max);
    let vi_max = rows.iter().map(|r| r.variational_inequality).fold(f64::NEG_INFINITY, f64::max);
    let tolerance = s.tol_certificate();
    Ok(Certificates {
        passed: minimality_max <= tolerance && vi_max <= tolerance,
        rows,
        minimality_max,
        vi_max,
        tolerance,
    })
}

/// `int <psi, d mu_n>` for `psi^i = prod_k sin(pi xi_k)` on every component.
pub fn weak_pairing(sol: &PenalizedSolution, grid: &SpatialGrid) -> f64 {
    let m = sol.density.components();
    let psi: Vec<f64> = grid
        .interior_points()
        .iter()
        .map(|x| {
            (0..grid.dim())
                .map(|k| (std::f64::consts::PI * (x[k] - grid.lower()[k]) / (grid.upper()[k] - grid.lower()[k])).sin())
                .product()
        })
        .collect();
    let psi_full: Vec<f64> = psi.iter().flat_map(|p| std::iter::repeat(*p).take(m)).collect();
    let w = sol.time.dt() * grid.cell_volume();
    (0..sol.time.steps()).map(|k| w * inner(sol.density.slice(k), &psi_full)).sum()
}

/// Largest `dist(u, boundary of D)` over nodes where the density is nonzero.
pub fn active_band(sol: &PenalizedSolution, sets: &[Vec<ConvexSet>]) -> f64 {
    let m = sol.u.components();
    let mut worst: f64 = 0.0;
    for (k, slice_sets) in sets.iter().enumerate() {
        let dens = sol.density.slice(k);
        for (i, set) in slice_sets.iter().enumerate() {
            if dens[i * m..(i + 1) * m].iter().any(|v| *v != 0.0) {
                worst = worst.max(set.dist_to_boundary(&sol.u.slice(k)[i * m..(i + 1) * m]));
            }
        }
    }
    worst
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `max <= factor * median`.
pub fn within_factor_of_median(values: &[f64], factor: f64) -> bool {
    let max = values.iter().copied().fold(0.0, f64::max);
    max <= factor * median(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_bound() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(within_factor_of_median(&[0.0, 0.0, 0.0], 2.0));
        assert!(within_factor_of_median(&[1.0, 1.5, 1.9], 2.0));
        assert!(!within_factor_of_median(&[1.0, 1.0, 5.0], 2.0));
    }
}
