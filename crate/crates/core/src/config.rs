//! Scenario configuration files.
//!
//! A config is a TOML document with typed sections. Unknown keys are
//! rejected, and parsing materializes every default so that an emitted
//! config describes its run completely.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::driver::Source;
use crate::error::{Error, Result};
use crate::geometry::GeometryOptions;
use crate::operator::LinearSolveOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub system: SystemConfig,
    pub coefficient: CoefficientConfig,
    pub driver: DriverConfig,
    pub terminal: TerminalConfig,
    pub obstacle: ObstacleConfig,
    #[serde(default)]
    pub witness: WitnessConfig,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub geometry: GeometryOptions,
    #[serde(default)]
    pub linear_solver: LinearSolveOptions,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub theta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    Piecewise {
        axis: usize,
        split: f64,
        left: Vec<Vec<f64>>,
        right: Vec<Vec<f64>>,
    },
    RotatingAnisotropy {
        major: f64,
        minor: f64,
        angular_speed: f64,
        #[serde(default)]
        twist: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    Zero,
    /// `f = c y + s(x)`.
    LinearCoupling {
        coupling: Vec<Vec<f64>>,
        #[serde(default)]
        source: Source,
    },
    /// `f = clip(c y) + w clip(z 1) + s(x)`.
    ClippedNonlinear {
        coupling: Vec<Vec<f64>>,
        clip: f64,
        #[serde(default)]
        gradient_weight: f64,
        #[serde(default)]
        source: Source,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    Zero,
    /// `phi_i = amplitude_i * prod_k sin(pi (x_k - lower_k) / (upper_k - lower_k))`.
    Sine { amplitude: Vec<f64> },
    /// `phi(x) = projection of point onto D(T, x)`.
    Projected { point: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleConfig {
    StaticBall {
        center: Vec<f64>,
        radius: f64,
    },
    /// Ball of radius `radius + rate * t`.
    GrowingBall {
        center: Vec<f64>,
        radius: f64,
        rate: f64,
    },
    /// Box `[c_i - w, c_i + w]` around `c_i = amplitude_i sin(pi t / T) prod_k sin(pi xi_k)`.
    MovingBox {
        amplitude: Vec<f64>,
        half_width: f64,
        inner_half_width: f64,
    },
    /// `[lower(t, x), upper]` per component with
    /// `lower = base + slope t - curvature |x - domain centre|^2`.
    LowerObstacle {
        base: f64,
        slope: f64,
        curvature: f64,
        upper: f64,
    },
    /// A polytope translating with constant velocity.
    HalfspaceIntersection {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        interior: Vec<f64>,
        #[serde(default)]
        velocity: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WitnessConfig {
    #[default]
    None,
    Zero {
        epsilon: f64,
    },
    /// Midpoint of the obstacle's inner box (or the ball centre).
    Midpoint {
        epsilon: f64,
        #[serde(default = "default_witness_residual")]
        residual_tolerance: f64,
    },
}

fn default_witness_residual() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Penalty used by the single-rung `solve` command; defaults to the finest level.
    #[serde(default)]
    pub solve_level: Option<f64>,
}

fn default_levels() -> Vec<f64> {
    vec![16.0, 64.0, 256.0, 1024.0, 4096.0]
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            levels: default_levels(),
            solve_level: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Nonlinear step increment tolerance, relative to `max(1, |u|_inf)`.
    pub picard: f64,
    /// Max-norm tolerance on the residual of each implicit step.
    pub residual: f64,
    pub picard_max_iterations: usize,
    /// Number of time-step halvings tried when a step fails to converge.
    pub retry_halvings: usize,
    /// `tol_feas = feasibility_factor * R_D`.
    pub feasibility_factor: f64,
    /// `tol_min = tol_vi = certificate_factor * (1 + |phi|^2 + |f(.,.,0,0)|^2)`.
    pub certificate_factor: f64,
    pub decay_slack: f64,
    /// Absolute floor below which successive differences count as converged.
    pub decay_floor: f64,
    pub feasibility_growth: f64,
    /// Energy and total-variation traces must stay within this factor of their medians.
    pub bound_factor: f64,
    /// `delta_active = active_band_factor * tol_feas`.
    pub active_band_factor: f64,
    /// No-contact runs must match the unconstrained solve to `no_contact_factor * scale`.
    pub no_contact_factor: f64,
    pub terminal_slack: f64,
    pub lipschitz_probes: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            picard: 1e-10,
            residual: 1e-8,
            picard_max_iterations: 100,
            retry_halvings: 4,
            feasibility_factor: 1e-3,
            certificate_factor: 1e-6,
            decay_slack: 1.5,
            decay_floor: 1e-12,
            feasibility_growth: 1.05,
            bound_factor: 2.0,
            active_band_factor: 2.0,
            no_contact_factor: 1e-6,
            terminal_slack: 1e-12,
            lipschitz_probes: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KillingRule {
    /// Kill at the first Euler step that lands outside the domain.
    #[default]
    FirstCrossing,
    /// Additionally kill with the Brownian-bridge crossing probability between steps.
    BrownianBridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub dt: f64,
    /// Start time of the checked nodes; defaults to `max(0, T - 0.5)`.
    pub start_time: Option<f64>,
    pub nodes: usize,
    pub c_disc: f64,
    pub chunk_size: usize,
    pub killing: KillingRule,
    /// The estimate's standard error must stay below this fraction of the value scale.
    pub max_relative_error: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            paths: 100_000,
            dt: 2.5e-3,
            start_time: None,
            nodes: 20,
            c_disc: 2.5,
            chunk_size: 4096,
            killing: KillingRule::FirstCrossing,
            max_relative_error: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    None,
    /// Projected SOR on the same grid (single component, driver independent of `y` and `z`).
    Psor,
    /// `u = exp(-(T - t)/2) sin(x)` on `(0, pi)`.
    Heat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub reference: ReferenceKind,
    /// Max-norm tolerance against a PSOR reference.
    pub reference_tolerance: f64,
    /// Heat reference passes when the error is below `heat_constant * (h^2 + dt)`.
    pub heat_constant: f64,
    pub psor_omega: f64,
    pub psor_tolerance: f64,
    pub psor_max_sweeps: usize,
    /// Compare against the unconstrained solve and require a vanishing reaction measure.
    pub no_contact: bool,
    /// Random perturbations `Pi_D(u + delta xi)` in the admissible test family.
    pub perturbations: usize,
    /// `delta = perturbation_scale * max(1, |u|_inf)`.
    pub perturbation_scale: f64,
    pub energy_bound: bool,
    pub feasibility_decay: bool,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            reference: ReferenceKind::None,
            reference_tolerance: 1e-3,
            heat_constant: 5.0,
            psor_omega: 1.5,
            psor_tolerance: 1e-13,
            psor_max_sweeps: 200_000,
            no_contact: false,
            perturbations: 2,
            perturbation_scale: 0.1,
            energy_bound: true,
            feasibility_decay: true,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.materialize();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Fills every optional value with the default it resolves to.
    fn materialize(&mut self) {
        let horizon = self.time.horizon;
        if self.monte_carlo.start_time.is_none() {
            self.monte_carlo.start_time = Some((horizon - 0.5).max(0.0));
        }
        if self.ladder.solve_level.is_none() {
            self.ladder.solve_level = self.ladder.levels.last().copied();
        }
        if let ObstacleConfig::HalfspaceIntersection { velocity, interior, .. } = &mut self.obstacle {
            if velocity.is_empty() {
                *velocity = vec![0.0; interior.len()];
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be positive, got {v}")))
            }
        };
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        let dom = &self.domain;
        let d = dom.cells.len();
        if !(1..=2).contains(&d) || dom.lower.len() != d || dom.upper.len() != d {
            return Err(Error::validation("domain", "lower, upper and cells must share a dimension of 1 or 2"));
        }
        if dom.lower.iter().zip(&dom.upper).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::validation("domain", "need lower < upper on every axis"));
        }
        if dom.cells.iter().any(|c| *c < 2) {
            return Err(Error::validation("domain.cells", "need at least 2 cells per axis"));
        }
        positive("time.horizon", self.time.horizon)?;
        if self.time.steps == 0 {
            return Err(Error::validation("time.steps", "must be at least 1"));
        }
        if !(0.5..=1.0).contains(&self.time.theta) {
            return Err(Error::validation("time.theta", "must lie in [0.5, 1]"));
        }
        if self.system.components == 0 {
            return Err(Error::validation("system.components", "must be at least 1"));
        }
        let levels = &self.ladder.levels;
        if levels.is_empty() || levels.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(Error::validation("ladder.levels", "penalty levels must be positive"));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("ladder.levels", "must be strictly increasing"));
        }
        if let Some(n) = self.ladder.solve_level {
            positive("ladder.solve_level", n)?;
        }
        let t = &self.tolerances;
        positive("tolerances.picard", t.picard)?;
        positive("tolerances.residual", t.residual)?;
        positive("tolerances.feasibility_factor", t.feasibility_factor)?;
        positive("tolerances.certificate_factor", t.certificate_factor)?;
        positive("tolerances.decay_slack", t.decay_slack)?;
        positive("tolerances.bound_factor", t.bound_factor)?;
        if t.picard_max_iterations == 0 {
            return Err(Error::validation("tolerances.picard_max_iterations", "must be at least 1"));
        }
        positive("geometry.dykstra_tolerance", self.geometry.dykstra_tolerance)?;
        if self.geometry.dykstra_cap_factor == 0 || self.geometry.hausdorff_directions_per_dim == 0 {
            return Err(Error::validation("geometry", "caps and direction counts must be positive"));
        }
        positive("linear_solver.cg_tolerance", self.linear_solver.cg_tolerance)?;
        let mc = &self.monte_carlo;
        if mc.paths < 2 || mc.chunk_size == 0 {
            return Err(Error::validation("monte_carlo.paths", "need at least 2 paths and a positive chunk size"));
        }
        positive("monte_carlo.dt", mc.dt)?;
        if let Some(s) = mc.start_time {
            if !(0.0..self.time.horizon).contains(&s) {
                return Err(Error::validation("monte_carlo.start_time", "must lie in [0, T)"));
            }
        }
        if !(self.checks.psor_omega > 0.0 && self.checks.psor_omega < 2.0) {
            return Err(Error::validation("checks.psor_omega", "must lie in (0, 2)"));
        }
        let m = self.system.components;
        let dim = |field: &str, v: &[f64]| -> Result<()> {
            if v.len() == m {
                Ok(())
            } else {
                Err(Error::validation(field, format!("needs {m} entries, got {}", v.len())))
            }
        };
        match &self.obstacle {
            ObstacleConfig::StaticBall { center, radius } => {
                dim("obstacle.center", center)?;
                positive("obstacle.radius", *radius)?;
            }
            ObstacleConfig::GrowingBall { center, radius, rate } => {
                dim("obstacle.center", center)?;
                positive("obstacle.radius", *radius)?;
                positive("obstacle.radius", radius + rate * self.time.horizon)?;
            }
            ObstacleConfig::MovingBox {
                amplitude,
                half_width,
                inner_half_width,
            } => {
                dim("obstacle.amplitude", amplitude)?;
                positive("obstacle.half_width", *half_width)?;
                if !(*inner_half_width >= 0.0 && inner_half_width < half_width) {
                    return Err(Error::validation(
                        "obstacle.inner_half_width",
                        "must lie in [0, half_width)",
                    ));
                }
            }
            ObstacleConfig::LowerObstacle { base, upper, .. } => {
                if !(base < upper) {
                    return Err(Error::validation("obstacle.upper", "must exceed the obstacle base"));
                }
            }
            ObstacleConfig::HalfspaceIntersection { interior, .. } => dim("obstacle.interior", interior)?,
        }
        match &self.witness {
            WitnessConfig::None => {}
            WitnessConfig::Zero { epsilon } | WitnessConfig::Midpoint { epsilon, .. } => {
                positive("witness.epsilon", *epsilon)?
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.to_toml_string().as_bytes())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[domain]
lower = [0.0]
upper = [1.0]
cells = [8]
[time]
horizon = 1.0
steps = 4
[system]
components = 2
[coefficient]
kind = "constant"
matrix = [[1.0]]
[driver]
kind = "zero"
[terminal]
kind = "zero"
[obstacle]
kind = "static_ball"
center = [0.0, 0.0]
radius = 1.0
"#;

    #[test]
    fn defaults_are_materialized() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.ladder.solve_level, Some(4096.0));
        assert_eq!(cfg.monte_carlo.start_time, Some(0.5));
        let text = cfg.to_toml_string();
        for key in ["picard_max_iterations", "dykstra_tolerance", "c_disc", "solve_level", "theta"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        let again = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_report_a_line() {
        let text = MINIMAL.replace("steps = 4", "steps = 4\nstepz = 3");
        match ScenarioConfig::from_toml_str(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let text = MINIMAL.replace("steps = 4", "steps = 4\ntheta = 0.2");
        match ScenarioConfig::from_toml_str(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "time.theta"),
            other => panic!("{other:?}"),
        }
    }
}
