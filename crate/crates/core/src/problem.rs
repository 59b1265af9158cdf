//! Runtime scenario built from a [`ScenarioConfig`]: grids, coefficient,
//! driver, obstacle family, terminal data and separation witness.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coefficient::{
    ConstantCoefficient, CoefficientField, PiecewiseCoefficient, RotatingAnisotropy, SymTensor,
};
use crate::config::{
    CoefficientConfig, DriverConfig, ObstacleConfig, ScenarioConfig, TerminalConfig, WitnessConfig,
};
use crate::driver::{lipschitz_probe, Driver, Source, SourceField, StandardDriver};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{
    dist_points, norm, validate_d1, validate_d2, ContinuityReport, ConvexSet, ObstacleFamily,
    SeparationReport, SeparationWitness,
};
use crate::grid::{SpaceTimeField, SpatialGrid, TimeGrid};

/// `prod_k sin(pi xi_k)` with `xi` the normalized coordinate, and its derivatives.
#[derive(Clone, Debug, PartialEq)]
struct SineProfile {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SineProfile {
    fn freq(&self, k: usize) -> f64 {
        PI / (self.upper[k] - self.lower[k])
    }

    fn factors(&self, x: &[f64]) -> Vec<(f64, f64)> {
        (0..x.len())
            .map(|k| {
                let arg = self.freq(k) * (x[k] - self.lower[k]);
                (arg.sin(), arg.cos())
            })
            .collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.factors(x).iter().map(|(s, _)| s).product()
    }

    /// Hessian, row-major d x d.
    fn hessian(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let f = self.factors(x);
        let d = x.len();
        let mut h = [[0.0; 2]; 2];
        for i in 0..d {
            for j in 0..d {
                let mut v = 1.0;
                for (k, (s, c)) in f.iter().enumerate() {
                    v *= match (k == i, k == j) {
                        (true, true) => -self.freq(k).powi(2) * s,
                        (true, false) | (false, true) => self.freq(k) * c,
                        _ => *s,
                    };
                }
                h[i][j] = v;
            }
        }
        h
    }
}

/// The obstacle family of a scenario.
#[derive(Clone, Debug)]
pub struct Obstacle {
    config: ObstacleConfig,
    components: usize,
    horizon: f64,
    profile: SineProfile,
    centre: Vec<f64>,
    base: Option<ConvexSet>,
    bound: f64,
}

impl Obstacle {
    pub fn new(config: &ObstacleConfig, components: usize, grid: &SpatialGrid, horizon: f64) -> Result<Self> {
        let m = components;
        let need = |field: &str, len: usize| -> Result<()> {
            if len == m {
                Ok(())
            } else {
                Err(Error::validation(field, format!("expected {m} entries, got {len}")))
            }
        };
        let profile = SineProfile {
            lower: grid.lower().to_vec(),
            upper: grid.upper().to_vec(),
        };
        let centre: Vec<f64> = (0..grid.dim())
            .map(|k| 0.5 * (grid.lower()[k] + grid.upper()[k]))
            .collect();
        let mut base = None;
        let bound = match config {
            ObstacleConfig::StaticBall { center, radius } => {
                need("obstacle.center", center.len())?;
                ConvexSet::new_ball(center.clone(), *radius)?;
                norm(center) + radius
            }
            ObstacleConfig::GrowingBall { center, radius, rate } => {
                need("obstacle.center", center.len())?;
                ConvexSet::new_ball(center.clone(), *radius)?;
                let end = radius + rate * horizon;
                if !(end > 0.0) {
                    return Err(Error::validation("obstacle.rate", "radius must stay positive on [0, T]"));
                }
                norm(center) + radius.max(end)
            }
            ObstacleConfig::MovingBox {
                amplitude,
                half_width,
                inner_half_width,
            } => {
                need("obstacle.amplitude", amplitude.len())?;
                if !(*inner_half_width > 0.0 && inner_half_width < half_width) {
                    return Err(Error::validation(
                        "obstacle.inner_half_width",
                        "need 0 < inner_half_width < half_width",
                    ));
                }
                amplitude.iter().map(|a| (a.abs() + half_width).powi(2)).sum::<f64>().sqrt()
            }
            ObstacleConfig::LowerObstacle {
                base: b,
                slope,
                curvature,
                upper,
            } => {
                let reach2: f64 = (0..grid.dim())
                    .map(|k| (0.5 * (grid.upper()[k] - grid.lower()[k])).powi(2))
                    .sum();
                let top = b + slope.max(0.0) * horizon - curvature.min(0.0) * reach2;
                let bottom = b + slope.min(0.0) * horizon - curvature.max(0.0) * reach2;
                if !(top < *upper) {
                    return Err(Error::validation("obstacle.upper", "lower obstacle must stay below the upper bound"));
                }
                (m as f64).sqrt() * upper.abs().max(bottom.abs()).max(top.abs())
            }
            ObstacleConfig::HalfspaceIntersection {
                normals,
                offsets,
                interior,
                velocity,
            } => {
                need("obstacle.interior", interior.len())?;
                need("obstacle.velocity", velocity.len())?;
                let set = ConvexSet::new_halfspaces(normals.clone(), offsets.clone(), interior.clone())?;
                let r = set.bounding_radius() + norm(velocity) * horizon;
                base = Some(set);
                r
            }
        };
        Ok(Obstacle {
            config: config.clone(),
            components,
            horizon,
            profile,
            centre,
            base,
            bound,
        })
    }

    fn moving_centre(&self, amplitude: &[f64], t: f64, x: &[f64]) -> Vec<f64> {
        let s = (PI * t / self.horizon).sin() * self.profile.value(x);
        amplitude.iter().map(|a| a * s).collect()
    }

    fn lower_value(&self, base: f64, slope: f64, curvature: f64, t: f64, x: &[f64]) -> f64 {
        base + slope * t - curvature * dist_points(x, &self.centre).powi(2)
    }

    /// A point in the middle of the set: ball centre, box midpoint or the translated interior point.
    pub fn midpoint(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match &self.config {
            ObstacleConfig::StaticBall { center, .. } | ObstacleConfig::GrowingBall { center, .. } => center.clone(),
            ObstacleConfig::MovingBox { amplitude, .. } => self.moving_centre(amplitude, t, x),
            ObstacleConfig::LowerObstacle {
                base,
                slope,
                curvature,
                upper,
            } => vec![0.5 * (self.lower_value(*base, *slope, *curvature, t, x) + upper); self.components],
            ObstacleConfig::HalfspaceIntersection { velocity, .. } => self
                .base
                .as_ref()
                .expect("polytope base")
                .interior_point()
                .iter()
                .zip(velocity)
                .map(|(p, v)| p + v * t)
                .collect(),
        }
    }

    /// Source `f*` for which the midpoint solves the linear equation, when known in closed form.
    pub fn midpoint_source(&self, a: &dyn CoefficientField, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        match &self.config {
            ObstacleConfig::MovingBox { amplitude, .. } => {
                let w = PI / self.horizon;
                let p = self.profile.value(x);
                let h = self.profile.hessian(x);
                let at = a.at(t, x);
                let mut trace = 0.0;
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        trace += at.m[i][j] * h[j][i];
                    }
                }
                let s = (w * t).sin();
                let ds = w * (w * t).cos();
                Some(amplitude.iter().map(|amp| -(amp * ds * p + 0.5 * amp * s * trace)).collect())
            }
            _ => None,
        }
    }
}

impl ObstacleFamily for Obstacle {
    fn components(&self) -> usize {
        self.components
    }

    fn set_at(&self, t: f64, x: &[f64]) -> ConvexSet {
        match &self.config {
            ObstacleConfig::StaticBall { center, radius } => {
                ConvexSet::new_ball(center.clone(), *radius).expect("validated ball")
            }
            ObstacleConfig::GrowingBall { center, radius, rate } => {
                ConvexSet::new_ball(center.clone(), radius + rate * t).expect("validated ball")
            }
            ObstacleConfig::MovingBox {
                amplitude, half_width, ..
            } => {
                let c = self.moving_centre(amplitude, t, x);
                ConvexSet::new_box(
                    c.iter().map(|v| v - half_width).collect(),
                    c.iter().map(|v| v + half_width).collect(),
                )
                .expect("validated box")
            }
            ObstacleConfig::LowerObstacle {
                base,
                slope,
                curvature,
                upper,
            } => {
                let lo = self.lower_value(*base, *slope, *curvature, t, x);
                ConvexSet::new_box(vec![lo; self.components], vec![*upper; self.components]).expect("validated box")
            }
            ObstacleConfig::HalfspaceIntersection { velocity, .. } => {
                let shift: Vec<f64> = velocity.iter().map(|v| v * t).collect();
                self.base.as_ref().expect("polytope base").translated(&shift)
            }
        }
    }

    fn uniform_bound(&self) -> f64 {
        self.bound
    }
}

/// Result of the scenario-level assumption checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Largest `dist(phi(x), D(T, x))` over interior nodes.
    pub terminal_distance: f64,
    pub source_norm_sq: f64,
    pub lipschitz: (f64, f64),
    /// Largest violation of the recorded Lipschitz bound on random probes (<= 0 when satisfied).
    pub lipschitz_violation: f64,
    pub continuity: ContinuityReport,
    pub separation: Option<SeparationReport>,
}

pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub theta: f64,
    pub components: usize,
    pub coefficient: Box<dyn CoefficientField>,
    pub driver: StandardDriver,
    pub obstacle: Obstacle,
    /// Terminal data on interior nodes, components interleaved.
    pub terminal: Vec<f64>,
    pub exec: Exec,
}

fn matrix(field: &str, rows: &[Vec<f64>], m: usize) -> Result<Vec<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::validation(field, format!("expected a {m}x{m} matrix")));
    }
    Ok(rows.iter().flatten().copied().collect())
}

impl Scenario {
    pub fn from_config(config: &ScenarioConfig, exec: Exec) -> Result<Self> {
        Self::build(config, exec).map_err(|e| e.in_scenario(&config.name))
    }

    fn build(config: &ScenarioConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        let d = &config.domain;
        let grid = SpatialGrid::new(d.lower.clone(), d.upper.clone(), d.cells.clone())?;
        let time = TimeGrid::new(config.time.horizon, config.time.steps)?;
        let m = config.system.components;
        let dim = grid.dim();

        let coefficient: Box<dyn CoefficientField> = match &config.coefficient {
            CoefficientConfig::Constant { matrix } => Box::new(ConstantCoefficient::new(SymTensor::from_rows(matrix)?)),
            CoefficientConfig::Piecewise { axis, split, left, right } => Box::new(PiecewiseCoefficient::new(
                *axis,
                *split,
                SymTensor::from_rows(left)?,
                SymTensor::from_rows(right)?,
            )?),
            CoefficientConfig::RotatingAnisotropy {
                major,
                minor,
                angular_speed,
                twist,
            } => Box::new(RotatingAnisotropy::new(*major, *minor, *angular_speed, *twist)?),
        };
        if coefficient.dim() != dim {
            return Err(Error::validation(
                "coefficient",
                format!("{}-dimensional coefficient on a {dim}-dimensional domain", coefficient.dim()),
            ));
        }

        let source = |s: &Source| SourceField::new(s.clone(), grid.lower().to_vec(), grid.upper().to_vec());
        let driver = match &config.driver {
            DriverConfig::Zero => StandardDriver::zero(m, dim),
            DriverConfig::LinearCoupling { coupling, source: s } => StandardDriver::new(
                m,
                dim,
                matrix("driver.coupling", coupling, m)?,
                f64::INFINITY,
                0.0,
                source(s),
            )?,
            DriverConfig::ClippedNonlinear {
                coupling,
                clip,
                gradient_weight,
                source: s,
            } => StandardDriver::new(m, dim, matrix("driver.coupling", coupling, m)?, *clip, *gradient_weight, source(s))?,
        };

        let obstacle = Obstacle::new(&config.obstacle, m, &grid, time.horizon())?;

        let profile = SineProfile {
            lower: grid.lower().to_vec(),
            upper: grid.upper().to_vec(),
        };
        let horizon = time.horizon();
        let mut terminal = Vec::with_capacity(grid.num_interior() * m);
        for x in grid.interior_points() {
            match &config.terminal {
                TerminalConfig::Zero => terminal.extend(std::iter::repeat(0.0).take(m)),
                TerminalConfig::Sine { amplitude } => {
                    if amplitude.len() != m {
                        return Err(Error::validation("terminal.amplitude", format!("expected {m} entries")));
                    }
                    let p = profile.value(&x);
                    terminal.extend(amplitude.iter().map(|a| a * p));
                }
                TerminalConfig::Projected { point } => {
                    if point.len() != m {
                        return Err(Error::validation("terminal.point", format!("expected {m} entries")));
                    }
                    terminal.extend(obstacle.set_at(horizon, &x).project(point));
                }
            }
        }

        let scenario = Scenario {
            config: config.clone(),
            grid,
            time,
            theta: config.time.theta,
            components: m,
            coefficient,
            driver,
            obstacle,
            terminal,
            exec,
        };
        scenario.check_terminal()?;
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    /// Terminal compatibility: `phi(x)` must lie in `D(T, x)` at every node.
    pub fn terminal_distance(&self) -> (f64, usize) {
        let m = self.components;
        let t = self.time.horizon();
        let mut worst = (0.0, 0);
        for (i, x) in self.grid.interior_points().iter().enumerate() {
            let d = self.obstacle.set_at(t, x).dist(&self.terminal[i * m..(i + 1) * m]);
            if d > worst.0 {
                worst = (d, i);
            }
        }
        worst
    }

    fn check_terminal(&self) -> Result<()> {
        let (d, node) = self.terminal_distance();
        if d > self.config.tolerances.terminal_slack {
            return Err(Error::validation(
                "terminal",
                format!("terminal compatibility fails: terminal value at node {node} is {d:e} away from the obstacle"),
            ));
        }
        Ok(())
    }

    /// Obstacle sets on every slice of `time` and every interior node.
    pub fn sets(&self, time: &TimeGrid) -> Vec<Vec<ConvexSet>> {
        let points = self.grid.interior_points();
        self.exec.map(time.slices(), |k| {
            let t = time.time(k);
            points.iter().map(|x| self.obstacle.set_at(t, x)).collect()
        })
    }

    /// `||f(., ., 0, 0)||^2` in `L^2(0, T; H)`, trapezoidal in time.
    pub fn source_norm_sq(&self) -> f64 {
        let m = self.components;
        let d = self.grid.dim();
        let zero_y = vec![0.0; m];
        let zero_z = vec![0.0; m * d];
        let mut out = vec![0.0; m];
        let vol = self.grid.cell_volume();
        let points = self.grid.interior_points();
        let mut total = 0.0;
        for k in 0..self.time.slices() {
            let t = self.time.time(k);
            let w = if k == 0 || k == self.time.steps() { 0.5 } else { 1.0 };
            for x in &points {
                self.driver.eval(t, x, &zero_y, &zero_z, &mut out);
                total += w * self.time.dt() * vol * out.iter().map(|v| v * v).sum::<f64>();
            }
        }
        total
    }

    pub fn terminal_norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.terminal.iter().map(|v| v * v).sum::<f64>()
    }

    /// `1 + |phi|_H^2 + |f(., ., 0, 0)|^2`.
    pub fn energy_scale(&self) -> f64 {
        1.0 + self.terminal_norm_sq() + self.source_norm_sq()
    }

    pub fn tol_feas(&self) -> f64 {
        self.config.tolerances.feasibility_factor * self.obstacle.uniform_bound()
    }

    pub fn tol_certificate(&self) -> f64 {
        self.config.tolerances.certificate_factor * self.energy_scale()
    }

    pub fn delta_active(&self) -> f64 {
        self.config.tolerances.active_band_factor * self.tol_feas()
    }

    /// The configured separation witness sampled on `time`.
    pub fn witness(&self, time: &TimeGrid) -> Option<SeparationWitness> {
        let m = self.components;
        let points = self.grid.interior_points();
        let (epsilon, midpoint) = match &self.config.witness {
            WitnessConfig::None => return None,
            WitnessConfig::Zero { epsilon } => (*epsilon, false),
            WitnessConfig::Midpoint { epsilon, .. } => (*epsilon, true),
        };
        let mut values = SpaceTimeField::zeros(time.slices(), points.len(), m);
        let mut source = Some(SpaceTimeField::zeros(time.slices(), points.len(), m));
        for k in 0..time.slices() {
            let t = time.time(k);
            let slice = values.slice_mut(k);
            for (i, x) in points.iter().enumerate() {
                if midpoint {
                    slice[i * m..(i + 1) * m].copy_from_slice(&self.obstacle.midpoint(t, x));
                }
            }
            if midpoint {
                let mut src = Vec::with_capacity(points.len() * m);
                for x in &points {
                    match self.obstacle.midpoint_source(self.coefficient.as_ref(), t, x) {
                        Some(f) => src.extend(f),
                        None => {
                            source = None;
                            break;
                        }
                    }
                }
                if let Some(s) = source.as_mut() {
                    s.slice_mut(k).copy_from_slice(&src);
                }
            }
        }
        // the zero witness solves the linear equation with zero data
        let terminal = Some(values.slice(time.steps()).to_vec());
        Some(SeparationWitness {
            epsilon,
            values,
            terminal,
            source,
        })
    }

    pub fn witness_residual_tolerance(&self) -> f64 {
        match self.config.witness {
            WitnessConfig::Midpoint { residual_tolerance, .. } => residual_tolerance,
            _ => 0.05,
        }
    }

    /// Continuity, boundedness, Lipschitz and separation checks on the scenario grid.
    pub fn check_assumptions(&self) -> Result<AssumptionReport> {
        let source_norm_sq = self.source_norm_sq();
        if !source_norm_sq.is_finite() {
            return Err(Error::NonFinite { time: 0.0, node: 0 });
        }
        let continuity = validate_d1(&self.obstacle, &self.grid, &self.time, &self.config.geometry, self.exec)?;
        let separation = match self.witness(&self.time) {
            Some(w) => Some(validate_d2(
                &self.obstacle,
                &w,
                &self.grid,
                &self.time,
                Some(self.coefficient.as_ref()),
                self.witness_residual_tolerance(),
            )?),
            None => None,
        };
        let points = self.grid.interior_points();
        let violation = lipschitz_probe(
            &self.driver,
            self.grid.dim(),
            &points,
            0.5 * self.time.horizon(),
            self.config.tolerances.lipschitz_probes,
            self.config.seed,
        );
        Ok(AssumptionReport {
            terminal_distance: self.terminal_distance().0,
            source_norm_sq,
            lipschitz: self.driver.lipschitz(),
            lipschitz_violation: violation,
            continuity,
            separation,
        })
    }
}
