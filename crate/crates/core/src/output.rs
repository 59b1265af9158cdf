//! CSV tables and JSON documents for a [`RunResult`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::grid::{SpaceTimeField, SpatialGrid};
use crate::harness::RunResult;
use crate::ladder::LadderRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

const LAYOUT: &str = "# layout: time-major slices, interior nodes row-major with the last axis fastest, components innermost; nondimensional units";

/// One row per (slice, node, component).
pub fn field_csv(field: &SpaceTimeField, times: &[f64], grid: &SpatialGrid, quantity: &str) -> String {
    let d = grid.dim();
    let mut out = String::new();
    writeln!(out, "{LAYOUT}").unwrap();
    let coords: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    writeln!(out, "slice,t,node,{},component,{quantity}", coords.join(",")).unwrap();
    let points = grid.interior_points();
    for k in 0..field.slices() {
        for (i, x) in points.iter().enumerate().take(field.nodes()) {
            let xs: Vec<String> = x.iter().map(|v| num(*v)).collect();
            for (c, v) in field.at(k, i).iter().enumerate() {
                writeln!(out, "{k},{},{i},{},{c},{}", num(times[k]), xs.join(","), num(*v)).unwrap();
            }
        }
    }
    out
}

pub fn report_csv(rows: &[LadderRow]) -> String {
    let mut out = String::from(
        "penalty,halvings,energy_sup_l2,energy_grad,diff_l2,diff_grad,feasibility_l2,total_variation,minimality,variational_inequality,weak_pairing,nonlinear_iterations\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(r.penalty),
            r.halvings,
            num(r.energy.sup_l2),
            num(r.energy.grad_integral),
            opt(r.diff_l2),
            opt(r.diff_grad),
            num(r.feasibility_l2),
            num(r.total_variation),
            num(r.minimality),
            num(r.variational_inequality),
            num(r.weak_pairing),
            r.nonlinear_iterations
        )
        .unwrap();
    }
    out
}

pub fn checks_csv(result: &RunResult) -> String {
    let mut out = String::from("check,passed,value,threshold\n");
    for c in &result.checks {
        writeln!(out, "{},{},{},{}", c.name, c.passed, num(c.value), num(c.threshold)).unwrap();
    }
    out
}

pub fn feynman_kac_csv(result: &RunResult) -> String {
    let mut out = String::from("node,point,start_time,component,grid_value,estimate,standard_error,band,passed\n");
    if let Some(fk) = &result.feynman_kac {
        for r in &fk.rows {
            let p: Vec<String> = r.point.iter().map(|v| num(*v)).collect();
            for (e, b) in r.estimates.iter().zip(&r.band) {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.node,
                    p.join(" "),
                    num(r.start_time),
                    e.component,
                    num(r.grid_value[e.component]),
                    num(e.estimate),
                    num(e.standard_error),
                    num(*b),
                    r.passed
                )
                .unwrap();
            }
        }
    }
    out
}

fn provenance_csv(result: &RunResult) -> String {
    let p = &result.provenance;
    format!(
        "key,value\nscenario,{}\ncommand,{}\nconfig_hash,{}\nseed,{}\ncrate_version,{}\npassed,{}\nresult_hash,{}\n",
        p.scenario,
        p.command.name(),
        p.config_hash,
        p.seed,
        p.crate_version,
        result.passed,
        result.hash()
    )
}

/// Writes the result into `dir` and returns the files written.
pub fn emit(result: &RunResult, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    match format {
        Format::Json => put("result.json", serde_json::to_string_pretty(result)?)?,
        Format::Csv => {
            let cfg = ScenarioConfig::from_toml_str(&result.provenance.config)?;
            let grid = SpatialGrid::new(cfg.domain.lower.clone(), cfg.domain.upper.clone(), cfg.domain.cells.clone())?;
            if let Some(sol) = &result.solution {
                let times: Vec<f64> = (0..sol.time.slices()).map(|k| sol.time.time(k)).collect();
                put("u.csv", field_csv(&sol.u, &times, &grid, "u"))?;
                put("density.csv", field_csv(&sol.density, &times, &grid, "density"))?;
            }
            let rows = result.report.as_ref().map(|r| r.rows.as_slice()).unwrap_or(&[]);
            put("report.csv", report_csv(rows))?;
            put("checks.csv", checks_csv(result))?;
            put("feynman_kac.csv", feynman_kac_csv(result))?;
            put("provenance.csv", provenance_csv(result))?;
        }
    }
    put("config.toml", result.provenance.config.clone())?;
    Ok(written)
}

pub fn read_json(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let text = report_csv(&[]);
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("penalty,"));
    }

    #[test]
    fn seventeen_significant_digits() {
        let v = 0.1f64 + 0.2;
        let s = num(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }
}
