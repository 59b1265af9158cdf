//! Built-in scenarios, shipped as TOML next to the workspace.

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

const BUILTIN: &[(&str, &str)] = &[
    ("trivial_ball", include_str!("../../../configs/trivial_ball.toml")),
    ("heat_manufactured", include_str!("../../../configs/heat_manufactured.toml")),
    ("psor_compare", include_str!("../../../configs/psor_compare.toml")),
    ("growing_ball", include_str!("../../../configs/growing_ball.toml")),
    ("moving_box_example2", include_str!("../../../configs/moving_box_example2.toml")),
    ("coupled_two_component", include_str!("../../../configs/coupled_two_component.toml")),
];

pub fn names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn source(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let text = source(name).ok_or_else(|| Error::validation("name", format!("no built-in scenario {name:?}")))?;
    ScenarioConfig::from_toml_str(text).map_err(|e| e.in_scenario(name))
}

/// The two-dimensional projected SOR comparison: 8 x 8 interior nodes, 16 steps.
pub fn psor_compare_2d() -> ScenarioConfig {
    let mut cfg = builtin("psor_compare").expect("built-in parses");
    cfg.name = "psor_compare_2d".into();
    cfg.domain.lower = vec![0.0, 0.0];
    cfg.domain.upper = vec![1.0, 1.0];
    cfg.domain.cells = vec![9, 9];
    cfg.time.steps = 16;
    cfg.coefficient = crate::config::CoefficientConfig::Constant {
        matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    };
    cfg
}
