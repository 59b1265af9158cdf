//! Monte Carlo cross-check of the penalized solution through its Feynman-Kac
//! representation, with Euler-Maruyama paths of `dX = sigma(t, X) dB` killed
//! on leaving the domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientField;
use crate::config::KillingRule;
use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Exec};
use crate::grid::{SpatialGrid, TimeGrid};
use crate::problem::Scenario;
use crate::solver::{PenalizedSolution, SliceDriver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exit {
    Boundary,
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Upper 32 bits of every chunk's stream id, so that independent checks can share a seed.
    pub stream: u32,
    pub chunk_size: usize,
    pub killing: KillingRule,
    /// Keep every trajectory; memory grows with `paths * steps`.
    pub record: bool,
}

impl PathOptions {
    pub fn new(paths: usize, dt: f64, seed: u64) -> Self {
        PathOptions {
            paths,
            dt,
            seed,
            stream: 0,
            chunk_size: 4096,
            killing: KillingRule::FirstCrossing,
            record: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathBatch {
    pub start_time: f64,
    pub start: Vec<f64>,
    pub horizon: f64,
    /// Step actually used, `(horizon - start_time) / steps`.
    pub dt: f64,
    pub seed: u64,
    pub exits: Vec<Exit>,
    /// Elapsed time from the start at the recorded exit.
    pub exit_times: Vec<f64>,
    /// Position at exit, `paths * d`; outside the domain for boundary exits.
    pub exit_points: Vec<f64>,
    /// Per-path positions at every step up to and including the exit.
    pub trajectories: Option<Vec<Vec<f64>>>,
}

impl PathBatch {
    pub fn paths(&self) -> usize {
        self.exits.len()
    }

    /// Sample mean of the exit time and its standard error.
    pub fn mean_exit_time(&self) -> (f64, f64) {
        mean_and_error(&self.exit_times)
    }
}

/// Sample mean and `std / sqrt(N)` by pairwise summation.
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct Walker<'a> {
    lower: &'a [f64],
    upper: &'a [f64],
    coefficient: &'a dyn CoefficientField,
    start_time: f64,
    dt: f64,
    steps: usize,
    killing: KillingRule,
}

struct Walk {
    exit: Exit,
    elapsed: f64,
    point: [f64; 2],
}

impl Walker<'_> {
    fn new<'a>(
        grid: &'a SpatialGrid,
        coefficient: &'a dyn CoefficientField,
        start_time: f64,
        horizon: f64,
        dt: f64,
        killing: KillingRule,
    ) -> Walker<'a> {
        let span = (horizon - start_time).max(0.0);
        let steps = (span / dt).round().max(1.0) as usize;
        Walker {
            lower: grid.lower(),
            upper: grid.upper(),
            coefficient,
            start_time,
            dt: span / steps as f64,
            steps,
            killing,
        }
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(a, v)| *v > self.lower[a] && *v < self.upper[a])
    }

    /// Runs one path; `visit(step, t, x)` sees the left end of every interval the path enters.
    fn walk<R: Rng>(
        &self,
        rng: &mut R,
        start: &[f64],
        mut visit: impl FnMut(usize, f64, &[f64]),
        mut trace: Option<&mut Vec<f64>>,
    ) -> Walk {
        let d = start.len();
        let mut x = [0.0; 2];
        x[..d].copy_from_slice(start);
        let sqrt_dt = self.dt.sqrt();
        if let Some(tr) = trace.as_deref_mut() {
            tr.extend_from_slice(&x[..d]);
        }
        for j in 0..self.steps {
            let t = self.start_time + j as f64 * self.dt;
            visit(j, t, &x[..d]);
            let a = self.coefficient.at(t, &x[..d]);
            let sigma = a.sqrt();
            let mut xi = [0.0; 2];
            for v in xi.iter_mut().take(d) {
                *v = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
            }
            let mut next = x;
            for i in 0..d {
                next[i] += (0..d).map(|k| sigma.m[i][k] * xi[k]).sum::<f64>();
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.extend_from_slice(&next[..d]);
            }
            let elapsed = (j + 1) as f64 * self.dt;
            if !self.inside(&next[..d]) {
                return Walk {
                    exit: Exit::Boundary,
                    elapsed,
                    point: next,
                };
            }
            if self.killing == KillingRule::BrownianBridge {
                // Survival of the bridge between two interior points, face by face.
                let mut survive = 1.0;
                for i in 0..d {
                    let var = a.m[i][i] * self.dt;
                    for wall in [self.lower[i], self.upper[i]] {
                        let p = (-2.0 * (x[i] - wall) * (next[i] - wall) / var).exp();
                        survive *= 1.0 - p;
                    }
                }
                let u: f64 = rng.gen();
                if u >= survive {
                    return Walk {
                        exit: Exit::Boundary,
                        elapsed,
                        point: next,
                    };
                }
            }
            x = next;
        }
        Walk {
            exit: Exit::Horizon,
            elapsed: self.steps as f64 * self.dt,
            point: x,
        }
    }
}

fn chunk_rng(seed: u64, stream: u32, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | chunk as u64);
    rng
}

fn chunks(paths: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let size = size.max(1);
    (0..paths.div_ceil(size))
        .map(|c| c * size..((c + 1) * size).min(paths))
        .collect()
}

/// Simulates `paths` killed diffusions from `(start_time, start)` up to `horizon`.
///
/// Paths are split into chunks, each drawing from its own ChaCha8 stream, so the
/// batch is identical for any execution policy and worker count.
pub fn simulate_paths(
    grid: &SpatialGrid,
    coefficient: &dyn CoefficientField,
    start_time: f64,
    start: &[f64],
    horizon: f64,
    opts: &PathOptions,
    exec: Exec,
) -> Result<PathBatch> {
    if !grid.contains_open(start) {
        return Err(Error::validation("start", "path start must be interior"));
    }
    if !(opts.dt > 0.0) {
        return Err(Error::validation("monte_carlo.dt", "must be positive"));
    }
    let d = grid.dim();
    let walker = Walker::new(grid, coefficient, start_time, horizon, opts.dt, opts.killing);
    let ranges = chunks(opts.paths, opts.chunk_size);
    let parts = exec.map(ranges.len(), |c| {
        let mut rng = chunk_rng(opts.seed, opts.stream, c);
        let mut exits = Vec::with_capacity(ranges[c].len());
        let mut times = Vec::with_capacity(ranges[c].len());
        let mut points = Vec::with_capacity(ranges[c].len() * d);
        let mut traces = Vec::new();
        for _ in ranges[c].clone() {
            let mut tr = Vec::new();
            let w = walker.walk(&mut rng, start, |_, _, _| {}, opts.record.then_some(&mut tr));
            exits.push(w.exit);
            times.push(w.elapsed);
            points.extend_from_slice(&w.point[..d]);
            if opts.record {
                traces.push(tr);
            }
        }
        (exits, times, points, traces)
    });
    let mut batch = PathBatch {
        start_time,
        start: start.to_vec(),
        horizon,
        dt: walker.dt,
        seed: opts.seed,
        exits: Vec::with_capacity(opts.paths),
        exit_times: Vec::with_capacity(opts.paths),
        exit_points: Vec::with_capacity(opts.paths * d),
        trajectories: opts.record.then(Vec::new),
    };
    for (e, t, p, tr) in parts {
        batch.exits.extend(e);
        batch.exit_times.extend(t);
        batch.exit_points.extend(p);
        if let Some(all) = batch.trajectories.as_mut() {
            all.extend(tr);
        }
    }
    Ok(batch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkEstimate {
    pub component: usize,
    pub estimate: f64,
    pub standard_error: f64,
    pub paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkRow {
    pub node: usize,
    pub point: Vec<f64>,
    pub start_time: f64,
    pub grid_value: Vec<f64>,
    pub estimates: Vec<FkEstimate>,
    /// `3 SE + C_disc (h + dt_mc)` per component.
    pub band: Vec<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkReport {
    pub rows: Vec<FkRow>,
    pub c_disc: f64,
    pub h: f64,
    pub dt_mc: f64,
    pub value_scale: f64,
    pub passed: bool,
}

/// Running cost `f(t, x, u_n, sigma grad u_n) - n (u_n - Pi(u_n))` on all nodes of
/// every implicit slice, zero data on the boundary.
struct CostField {
    /// `[k][full_node * m + c]`, one entry per step interval.
    cost: Vec<Vec<f64>>,
    terminal: Vec<f64>,
    time: TimeGrid,
}

impl CostField {
    fn new(s: &Scenario, sol: &PenalizedSolution) -> Result<Self> {
        let grid = &s.grid;
        let m = s.components;
        let d = grid.dim();
        let points = grid.interior_points();
        let boundary: Vec<usize> = (0..grid.num_nodes())
            .filter(|&f| grid.is_boundary(grid.full_multi(f)))
            .collect();
        let steps = sol.time.steps();
        let cost = s.exec.map(steps, |k| -> Result<Vec<f64>> {
            let t = sol.time.time(k);
            let mut f = SliceDriver::new(s, t, &points).eval(sol.u.slice(k))?;
            for (v, mu) in f.iter_mut().zip(sol.density.slice(k)) {
                *v += mu;
            }
            let mut full = grid.extend_by_zero(&f, m);
            let (zy, zz) = (vec![0.0; m], vec![0.0; m * d]);
            for &b in &boundary {
                let x = grid.point(grid.full_multi(b));
                s.driver.eval(t, &x, &zy, &zz, &mut full[b * m..(b + 1) * m]);
            }
            Ok(full)
        });
        Ok(CostField {
            cost: cost.into_iter().collect::<Result<_>>()?,
            terminal: grid.extend_by_zero(sol.u.slice(steps), m),
            time: sol.time.clone(),
        })
    }
}

/// Multilinear interpolation weights on the full grid: up to four `(node, weight)` pairs.
fn stencil(grid: &SpatialGrid, x: &[f64]) -> ([(usize, f64); 4], usize) {
    let d = grid.dim();
    let mut base = [0usize; 2];
    let mut frac = [0.0; 2];
    for a in 0..d {
        let h = grid.spacing(a);
        let r = ((x[a] - grid.lower()[a]) / h).max(0.0);
        let i = (r.floor() as usize).min(grid.cells()[a] - 1);
        base[a] = i;
        frac[a] = (r - i as f64).clamp(0.0, 1.0);
    }
    let mut out = [(0, 0.0); 4];
    if d == 1 {
        out[0] = (grid.full_index([base[0], 0]), 1.0 - frac[0]);
        out[1] = (grid.full_index([base[0] + 1, 0]), frac[0]);
        (out, 2)
    } else {
        let mut n = 0;
        for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
            for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                out[n] = (grid.full_index([base[0] + di, base[1] + dj]), wi * wj);
                n += 1;
            }
        }
        (out, 4)
    }
}

fn interpolate(field: &[f64], m: usize, st: &([(usize, f64); 4], usize), out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for &(node, w) in &st.0[..st.1] {
        for c in 0..m {
            out[c] += w * field[node * m + c];
        }
    }
}

/// True when the coefficient has no spatial variation, so that `dX = sigma dB`
/// carries no drift.
fn spatially_constant(s: &Scenario) -> bool {
    let grid = &s.grid;
    let probes: Vec<Vec<f64>> = (0..grid.num_nodes()).map(|f| grid.point(grid.full_multi(f))).collect();
    let times = [0.0, 0.5 * s.time.horizon(), s.time.horizon()];
    times.iter().all(|&t| {
        let a0 = s.coefficient.at(t, &probes[0]);
        probes.iter().all(|x| {
            let a = s.coefficient.at(t, x);
            (0..a.dim).all(|i| (0..a.dim).all(|j| (a.m[i][j] - a0.m[i][j]).abs() <= 1e-14 * (1.0 + a0.m[i][j].abs())))
        })
    })
}

/// Evenly spread sample of interior nodes, `count` of them when the grid allows.
pub fn sample_nodes(grid: &SpatialGrid, count: usize) -> Vec<usize> {
    let n = grid.num_interior();
    if count >= n {
        return (0..n).collect();
    }
    if count <= 1 {
        return vec![n / 2];
    }
    // Golden-ratio stride visits the row-major ordering without aligning to rows.
    let phi = 0.618_033_988_749_894_9;
    let mut out: Vec<usize> = Vec::with_capacity(count);
    let mut j = 0usize;
    while out.len() < count {
        let idx = ((j as f64 * phi).fract() * n as f64) as usize;
        if !out.contains(&idx) {
            out.push(idx);
        }
        j += 1;
    }
    out.sort_unstable();
    out
}

/// Compares `u_n(s, x)` at the given nodes with the Monte Carlo mean of
/// `phi(X_T) 1{no exit} + int_s^{exit} f_u(X) - n (u_n - Pi(u_n))(X) dt`.
pub fn feynman_kac_check(s: &Scenario, sol: &PenalizedSolution, nodes: &[usize]) -> Result<FkReport> {
    let mc = &s.config.monte_carlo;
    if !spatially_constant(s) {
        return Err(Error::Unsupported(
            "Feynman-Kac check needs a spatially constant coefficient".into(),
        ));
    }
    let m = s.components;
    let d = s.grid.dim();
    let field = CostField::new(s, sol)?;
    let requested = mc.start_time.unwrap_or(0.0);
    let ks = ((requested / field.time.dt()).round() as usize).min(field.time.steps() - 1);
    let start_time = field.time.time(ks);
    let horizon = field.time.horizon();
    let walker = Walker::new(&s.grid, s.coefficient.as_ref(), start_time, horizon, mc.dt, mc.killing);
    let h = s.grid.max_spacing();
    let value_scale = {
        let v = sol.u.max_abs();
        if v > 0.0 {
            v
        } else {
            1.0
        }
    };
    let ranges = chunks(mc.paths, mc.chunk_size);

    let mut rows = Vec::with_capacity(nodes.len());
    for (r, &node) in nodes.iter().enumerate() {
        let x0 = s.grid.interior_point(node);
        let parts = s.exec.map(ranges.len(), |c| {
            let mut rng = chunk_rng(s.config.seed, r as u32 + 1, c);
            let mut values = vec![Vec::with_capacity(ranges[c].len()); m];
            let mut acc = vec![0.0; m];
            let mut tmp = vec![0.0; m];
            for _ in ranges[c].clone() {
                acc.iter_mut().for_each(|v| *v = 0.0);
                let w = walker.walk(
                    &mut rng,
                    &x0,
                    |_, t, x| {
                        let k = field.time.step_containing(t);
                        let st = stencil(&s.grid, x);
                        interpolate(&field.cost[k], m, &st, &mut tmp);
                        for c in 0..m {
                            acc[c] += walker.dt * tmp[c];
                        }
                    },
                    None,
                );
                if w.exit == Exit::Horizon {
                    let st = stencil(&s.grid, &w.point[..d]);
                    interpolate(&field.terminal, m, &st, &mut tmp);
                    for c in 0..m {
                        acc[c] += tmp[c];
                    }
                }
                for c in 0..m {
                    values[c].push(acc[c]);
                }
            }
            values
        });
        let mut estimates = Vec::with_capacity(m);
        let mut band = Vec::with_capacity(m);
        let grid_value = sol.u.at(ks, node).to_vec();
        let mut passed = true;
        for c in 0..m {
            let all: Vec<f64> = parts.iter().flat_map(|p| p[c].iter().copied()).collect();
            let (mean, se) = mean_and_error(&all);
            if se > mc.max_relative_error * value_scale {
                return Err(Error::InsufficientPaths {
                    standard_error: se,
                    scale: value_scale,
                });
            }
            let b = 3.0 * se + mc.c_disc * (h + walker.dt);
            passed &= (mean - grid_value[c]).abs() <= b;
            estimates.push(FkEstimate {
                component: c,
                estimate: mean,
                standard_error: se,
                paths: all.len(),
            });
            band.push(b);
        }
        rows.push(FkRow {
            node,
            point: x0,
            start_time,
            grid_value,
            estimates,
            band,
            passed,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(FkReport {
        rows,
        c_disc: mc.c_disc,
        h,
        dt_mc: walker.dt,
        value_scale,
        passed,
    })
}
