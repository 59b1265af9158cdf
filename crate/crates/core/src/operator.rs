//! Finite-difference discretization of `L_t u = 1/2 div(a grad u)` with zero
//! Dirichlet data, discrete energy norms and the implicit step solvers.
//!
//! In one dimension the flux at a cell face uses the harmonic mean of the
//! nodal coefficients. In two dimensions the stiffness is assembled cell by
//! cell: the cell-centre tensor is integrated against corner gradients built
//! from the two cell edges meeting at each corner. That form is symmetric by
//! construction, reduces to the five-point Laplacian for `a = I` and keeps
//! the ellipticity sandwich exact for full tensors.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coefficient::{probe_ellipticity, CoefficientField, SymTensor};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{SpaceTimeField, SpatialGrid, TimeGrid};

/// Sparse symmetric matrix acting on interior nodes (CSR).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl DiscreteOperator {
    pub fn zero(rows: usize, dim: usize) -> Self {
        DiscreteOperator {
            dim,
            row_ptr: vec![0; rows + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn from_rows(dim: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        DiscreteOperator {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_interleaved(x, 1)
    }

    /// Applies the operator to each of `m` interleaved components.
    pub fn apply_interleaved(&self, x: &[f64], m: usize) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, m, &mut y);
        y
    }

    fn apply_into(&self, x: &[f64], m: usize, y: &mut [f64]) {
        for i in 0..self.rows() {
            for c in 0..m {
                let mut s = 0.0;
                for (j, v) in self.row(i) {
                    s += v * x[j * m + c];
                }
                y[i * m + c] = s;
            }
        }
    }
}

/// Assembles the discrete `L_t` on the interior nodes of `grid`.
pub fn assemble(a: &dyn CoefficientField, grid: &SpatialGrid, t: f64, exec: Exec) -> Result<DiscreteOperator> {
    if a.dim() != grid.dim() {
        return Err(Error::Shape(format!(
            "coefficient is {}-dimensional but the domain is {}-dimensional",
            a.dim(),
            grid.dim()
        )));
    }
    match grid.dim() {
        1 => assemble_1d(a, grid, t),
        _ => assemble_2d(a, grid, t, exec),
    }
}

fn assemble_1d(a: &dyn CoefficientField, grid: &SpatialGrid, t: f64) -> Result<DiscreteOperator> {
    let cells = grid.cells()[0];
    let h = grid.spacing(0);
    let nodal: Vec<f64> = (0..=cells)
        .map(|i| probe_ellipticity(a, t, i, &grid.point([i, 0])).map(|s| s.m[0][0]))
        .collect::<Result<_>>()?;
    let face: Vec<f64> = (0..cells)
        .map(|i| 2.0 * nodal[i] * nodal[i + 1] / (nodal[i] + nodal[i + 1]))
        .collect();
    let scale = 1.0 / (2.0 * h * h);
    let n = cells - 1;
    let rows = (0..n)
        .map(|r| {
            // interior node r sits at full index r + 1, between faces r and r + 1
            let (west, east) = (face[r] * scale, face[r + 1] * scale);
            let mut row = Vec::with_capacity(3);
            if r > 0 {
                row.push((r - 1, west));
            }
            row.push((r, -(west + east)));
            if r + 1 < n {
                row.push((r + 1, east));
            }
            row
        })
        .collect();
    Ok(DiscreteOperator::from_rows(1, rows))
}

/// Corner gradients of a cell: `g_c = G_c u` with local corner order (0,0),(1,0),(0,1),(1,1).
fn cell_matrix(a: &SymTensor, h0: f64, h1: f64) -> [[f64; 4]; 4] {
    let gx = [[-1.0 / h0, 1.0 / h0, 0.0, 0.0], [0.0, 0.0, -1.0 / h0, 1.0 / h0]];
    let gy = [[-1.0 / h1, 0.0, 1.0 / h1, 0.0], [0.0, -1.0 / h1, 0.0, 1.0 / h1]];
    // corner (dx, dy) uses x-edge dy and y-edge dx
    let corners = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let mut out = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in p..4 {
            let mut s = 0.0;
            for &(dx, dy) in &corners {
                let gp = [gx[dy][p], gy[dx][p]];
                let gq = [gx[dy][q], gy[dx][q]];
                s += gp[0] * (a.m[0][0] * gq[0] + a.m[0][1] * gq[1])
                    + gp[1] * (a.m[1][0] * gq[0] + a.m[1][1] * gq[1]);
            }
            out[p][q] = -0.125 * s;
            out[q][p] = out[p][q];
        }
    }
    out
}

fn assemble_2d(a: &dyn CoefficientField, grid: &SpatialGrid, t: f64, exec: Exec) -> Result<DiscreteOperator> {
    let (c0, c1) = (grid.cells()[0], grid.cells()[1]);
    let (h0, h1) = (grid.spacing(0), grid.spacing(1));
    let cell_count = c0 * c1;
    let locals: Vec<Result<[[f64; 4]; 4]>> = exec.map(cell_count, |cell| {
        let (ci, cj) = (cell / c1, cell % c1);
        let x = [
            grid.lower()[0] + (ci as f64 + 0.5) * h0,
            grid.lower()[1] + (cj as f64 + 0.5) * h1,
        ];
        probe_ellipticity(a, t, cell, &x).map(|s| cell_matrix(&s, h0, h1))
    });
    let locals: Vec<[[f64; 4]; 4]> = locals.into_iter().collect::<Result<_>>()?;
    let rows = exec.map(grid.num_interior(), |r| {
        let [i, j] = grid.interior_multi(r);
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        // cells touching node (i, j) in ascending cell order
        for ci in [i - 1, i] {
            for cj in [j - 1, j] {
                let local = &locals[ci * c1 + cj];
                let p = (i - ci) + 2 * (j - cj);
                for q in 0..4 {
                    let multi = [ci + q % 2, cj + q / 2];
                    if let Some(col) = grid.interior_index(multi) {
                        *acc.entry(col).or_insert(0.0) += local[p][q];
                    }
                }
            }
        }
        acc.into_iter().collect::<Vec<_>>()
    });
    Ok(DiscreteOperator::from_rows(2, rows))
}

/// `sup_t ||u(t)||_H^2` and `int_0^T || |grad u| ||_H^2 dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyNorms {
    pub sup_l2: f64,
    pub grad_integral: f64,
}

impl EnergyNorms {
    pub fn total(&self) -> f64 {
        self.sup_l2 + self.grad_integral
    }
}

pub fn energy_norms(u: &SpaceTimeField, grid: &SpatialGrid, time: &TimeGrid) -> EnergyNorms {
    let m = u.components();
    let d = grid.dim();
    let w = grid.trapezoid_weights();
    let mut sup_l2: f64 = 0.0;
    let mut grad = 0.0;
    for k in 0..u.slices() {
        let full = grid.extend_by_zero(u.slice(k), m);
        let g = grid.full_gradients(&full, m);
        let mut l2 = 0.0;
        let mut g2 = 0.0;
        for (f, wf) in w.iter().enumerate() {
            for c in 0..m {
                l2 += wf * full[f * m + c].powi(2);
                for axis in 0..d {
                    g2 += wf * g[(f * m + c) * d + axis].powi(2);
                }
            }
        }
        sup_l2 = sup_l2.max(l2);
        let tw = if k == 0 || k + 1 == u.slices() { 0.5 } else { 1.0 };
        grad += tw * time.dt() * g2;
    }
    EnergyNorms {
        sup_l2,
        grad_integral: grad,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSolveOptions {
    pub cg_tolerance: f64,
    /// CG iterations are capped at `factor * unknowns`.
    pub cg_cap_factor: usize,
}

impl Default for LinearSolveOptions {
    fn default() -> Self {
        LinearSolveOptions {
            cg_tolerance: 1e-10,
            cg_cap_factor: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolve {
    pub solution: Vec<f64>,
    /// Max-norm residual of the returned solution.
    pub residual: f64,
    pub iterations: usize,
}

/// The implicit step matrix `(I - scale * A) (x) I_m + blockdiag(B_i)`.
///
/// Each block `B_i` is a symmetric positive semidefinite m x m matrix stored
/// row-major at `blocks[i * m * m..]`.
pub struct StepMatrix<'a> {
    pub op: &'a DiscreteOperator,
    pub scale: f64,
    pub components: usize,
    pub blocks: Option<&'a [f64]>,
}

impl StepMatrix<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.components;
        self.op.apply_into(x, m, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - self.scale * *yi;
        }
        if let Some(b) = self.blocks {
            for i in 0..self.op.rows() {
                for r in 0..m {
                    let mut s = 0.0;
                    for c in 0..m {
                        s += b[(i * m + r) * m + c] * x[i * m + c];
                    }
                    y[i * m + r] += s;
                }
            }
        }
    }

    fn diagonal_block(&self, i: usize) -> DMatrix<f64> {
        let m = self.components;
        let aii = self.op.get(i, i);
        DMatrix::from_fn(m, m, |r, c| {
            let id = if r == c { 1.0 - self.scale * aii } else { 0.0 };
            id + self.blocks.map_or(0.0, |b| b[(i * m + r) * m + c])
        })
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        self.apply(x)
            .iter()
            .zip(rhs)
            .fold(0.0, |acc, (a, b)| f64::max(acc, (a - b).abs()))
    }

    /// Direct block-tridiagonal elimination in 1d, block-Jacobi PCG in 2d.
    pub fn solve(&self, rhs: &[f64], options: &LinearSolveOptions) -> Result<LinearSolve> {
        if rhs.len() != self.op.rows() * self.components {
            return Err(Error::Shape("right-hand side does not match the operator".into()));
        }
        if self.op.rows() == 0 {
            return Ok(LinearSolve {
                solution: Vec::new(),
                residual: 0.0,
                iterations: 0,
            });
        }
        let solution = if self.op.dim() == 1 {
            if self.components == 1 {
                self.thomas(rhs)
            } else {
                self.block_thomas(rhs)?
            }
        } else {
            return self.pcg(rhs, options);
        };
        let residual = self.residual(&solution, rhs);
        Ok(LinearSolve {
            solution,
            residual,
            iterations: 1,
        })
    }

    fn thomas(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.op.rows();
        let s = self.scale;
        let b = self.blocks;
        let diag = |i: usize| 1.0 - s * self.op.get(i, i) + b.map_or(0.0, |b| b[i]);
        let lower = |i: usize| -s * self.op.get(i, i - 1);
        let upper = |i: usize| -s * self.op.get(i, i + 1);
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let d0 = diag(0);
        cp[0] = if n > 1 { upper(0) / d0 } else { 0.0 };
        dp[0] = rhs[0] / d0;
        for i in 1..n {
            let l = lower(i);
            let denom = diag(i) - l * cp[i - 1];
            cp[i] = if i + 1 < n { upper(i) / denom } else { 0.0 };
            dp[i] = (rhs[i] - l * dp[i - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        x
    }

    fn block_thomas(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.op.rows();
        let m = self.components;
        let s = self.scale;
        let singular = || Error::SolverDiverged {
            iterations: 0,
            residual: f64::INFINITY,
        };
        let mut inv: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        let mut bp: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut d = self.diagonal_block(i);
            let mut b = nalgebra::DVector::from_column_slice(&rhs[i * m..(i + 1) * m]);
            if i > 0 {
                let l = -s * self.op.get(i, i - 1);
                let u = -s * self.op.get(i - 1, i);
                d -= &inv[i - 1] * (l * u);
                b -= &inv[i - 1] * &bp[i - 1] * l;
            }
            inv.push(d.try_inverse().ok_or_else(singular)?);
            bp.push(b);
        }
        let mut x = vec![nalgebra::DVector::zeros(m); n];
        x[n - 1] = &inv[n - 1] * &bp[n - 1];
        for i in (0..n - 1).rev() {
            let u = -s * self.op.get(i, i + 1);
            x[i] = &inv[i] * (&bp[i] - &x[i + 1] * u);
        }
        Ok(x.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect())
    }

    fn pcg(&self, rhs: &[f64], options: &LinearSolveOptions) -> Result<LinearSolve> {
        let n = rhs.len();
        let m = self.components;
        let rows = self.op.rows();
        let mut precond: Vec<DMatrix<f64>> = Vec::with_capacity(rows);
        for i in 0..rows {
            let d = self.diagonal_block(i);
            precond.push(d.try_inverse().ok_or(Error::SolverDiverged {
                iterations: 0,
                residual: f64::INFINITY,
            })?);
        }
        let apply_precond = |r: &[f64], z: &mut [f64]| {
            for (i, p) in precond.iter().enumerate() {
                for a in 0..m {
                    let mut s = 0.0;
                    for b in 0..m {
                        s += p[(a, b)] * r[i * m + b];
                    }
                    z[i * m + a] = s;
                }
            }
        };
        let dotp = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let bnorm = dotp(rhs, rhs).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(LinearSolve {
                solution: x,
                residual: 0.0,
                iterations: 0,
            });
        }
        let mut r = rhs.to_vec();
        let mut z = vec![0.0; n];
        apply_precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dotp(&r, &z);
        let mut q = vec![0.0; n];
        let cap = options.cg_cap_factor * n;
        let target = options.cg_tolerance * bnorm;
        let mut iterations = 0;
        while dotp(&r, &r).sqrt() > target {
            if iterations >= cap {
                return Err(Error::SolverDiverged {
                    iterations,
                    residual: dotp(&r, &r).sqrt() / bnorm,
                });
            }
            self.apply_into(&p, &mut q);
            let alpha = rz / dotp(&p, &q);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            apply_precond(&r, &mut z);
            let rz_next = dotp(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
        let residual = self.residual(&x, rhs);
        Ok(LinearSolve {
            solution: x,
            residual,
            iterations,
        })
    }
}

/// Solves `(I - theta * dt * A) v = rhs` for every interleaved component of `rhs`.
pub fn solve_linear_step(
    op: &DiscreteOperator,
    rhs: &[f64],
    dt: f64,
    theta: f64,
    options: &LinearSolveOptions,
) -> Result<LinearSolve> {
    if !(dt > 0.0) || !(0.5..=1.0).contains(&theta) {
        return Err(Error::validation("time", "need dt > 0 and theta in [0.5, 1]"));
    }
    if op.rows() == 0 || rhs.len() % op.rows() != 0 {
        return Err(Error::Shape("right-hand side does not match the operator".into()));
    }
    StepMatrix {
        op,
        scale: theta * dt,
        components: rhs.len() / op.rows(),
        blocks: None,
    }
    .solve(rhs, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::{ConstantCoefficient, PiecewiseCoefficient};

    #[test]
    fn one_dimensional_identity_stencil() {
        let g = SpatialGrid::uniform_1d(0.0, 1.0, 8).unwrap();
        let op = assemble(&ConstantCoefficient::identity(1), &g, 0.0, Exec::Sequential).unwrap();
        let h = 0.125;
        let s = 1.0 / (2.0 * h * h);
        assert_eq!(op.get(3, 3), -2.0 * s);
        assert_eq!(op.get(3, 2), s);
        assert_eq!(op.get(3, 4), s);
        assert_eq!(op.rows(), 7);
    }

    #[test]
    fn two_dimensional_identity_is_half_five_point() {
        let g = SpatialGrid::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![4, 5]).unwrap();
        let op = assemble(&ConstantCoefficient::identity(2), &g, 0.0, Exec::Sequential).unwrap();
        let (h0, h1) = (g.spacing(0), g.spacing(1));
        for r in 0..op.rows() {
            let [i, j] = g.interior_multi(r);
            for (c, v) in op.row(r) {
                let [p, q] = g.interior_multi(c);
                let expect = if (p, q) == (i, j) {
                    -(1.0 / (h0 * h0) + 1.0 / (h1 * h1))
                } else if q == j && p.abs_diff(i) == 1 {
                    0.5 / (h0 * h0)
                } else if p == i && q.abs_diff(j) == 1 {
                    0.5 / (h1 * h1)
                } else {
                    0.0
                };
                assert!((v - expect).abs() < 1e-12 * expect.abs().max(1.0), "{r} {c} {v} {expect}");
            }
        }
    }

    #[test]
    fn two_material_flux_continuity() {
        // L u = -1 on (0,1), a = 1 left of 1/2 and 4 right of it.
        let c = 7.0 / 20.0;
        let exact = |x: f64| {
            if x <= 0.5 {
                2.0 * c * x - x * x
            } else {
                (c - 0.25) + 0.25 * (2.0 * c * (x - 0.5) - (x * x - 0.25))
            }
        };
        let a = PiecewiseCoefficient::new(0, 0.5, SymTensor::scalar(1.0), SymTensor::scalar(4.0)).unwrap();
        let mut errors = Vec::new();
        for cells in [33, 65, 129] {
            let g = SpatialGrid::uniform_1d(0.0, 1.0, cells).unwrap();
            let op = assemble(&a, &g, 0.0, Exec::Sequential).unwrap();
            // solve -A u = 1 with tridiagonal elimination via a huge implicit step
            let big = 1e12;
            let rhs = vec![big; op.rows()];
            let u = solve_linear_step(&op, &rhs, big, 1.0, &LinearSolveOptions::default())
                .unwrap()
                .solution;
            let err = (0..op.rows())
                .map(|i| (u[i] - exact(g.interior_point(i)[0])).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        assert!(errors[2] < 1e-4, "{errors:?}");
        assert!(errors[1] / errors[2] > 3.0, "{errors:?}");
    }

    #[test]
    fn heat_step_matches_eigendecomposition() {
        let cells = 9;
        let g = SpatialGrid::uniform_1d(0.0, 1.0, cells).unwrap();
        let op = assemble(&ConstantCoefficient::identity(1), &g, 0.0, Exec::Sequential).unwrap();
        let n = op.rows();
        assert_eq!(n, 8);
        let dense = DMatrix::from_fn(n, n, |i, j| op.get(i, j));
        let eig = dense.symmetric_eigen();
        let (dt, theta) = (0.01, 1.0);
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 1.5).collect();
        let b = nalgebra::DVector::from_column_slice(&rhs);
        let coeffs = eig.eigenvectors.transpose() * &b;
        let scaled = nalgebra::DVector::from_fn(n, |k, _| coeffs[k] / (1.0 - theta * dt * eig.eigenvalues[k]));
        let oracle = &eig.eigenvectors * scaled;
        let v = solve_linear_step(&op, &rhs, dt, theta, &LinearSolveOptions::default()).unwrap();
        for i in 0..n {
            assert!((v.solution[i] - oracle[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_agrees_with_direct_block_solve() {
        let g = SpatialGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![6, 7]).unwrap();
        let a = crate::coefficient::RotatingAnisotropy::new(2.0, 0.5, 1.0, 0.3).unwrap();
        let op = assemble(&a, &g, 0.4, Exec::Sequential).unwrap();
        let m = 2;
        let rows = op.rows();
        let blocks: Vec<f64> = (0..rows).flat_map(|i| {
            let s = 0.1 * (i % 3) as f64;
            vec![2.0 * s, s, s, s]
        }).collect();
        let sys = StepMatrix { op: &op, scale: 0.05, components: m, blocks: Some(&blocks) };
        let rhs: Vec<f64> = (0..rows * m).map(|i| (i as f64 * 0.37).sin()).collect();
        let sol = sys.solve(&rhs, &LinearSolveOptions::default()).unwrap();
        assert!(sol.residual < 1e-9);
        let dense = DMatrix::from_fn(rows * m, rows * m, |i, j| {
            let mut e = vec![0.0; rows * m];
            e[j] = 1.0;
            sys.apply(&e)[i]
        });
        let oracle = dense.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        for i in 0..rows * m {
            assert!((sol.solution[i] - oracle[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn energy_norms_of_sine() {
        let g = SpatialGrid::uniform_1d(0.0, 1.0, 200).unwrap();
        let t = TimeGrid::new(1.0, 4).unwrap();
        let slice: Vec<f64> = g
            .interior_points()
            .iter()
            .map(|x| (std::f64::consts::PI * x[0]).sin())
            .collect();
        let u = SpaceTimeField::constant_in_time(5, g.num_interior(), 1, &slice);
        let e = energy_norms(&u, &g, &t);
        let h2 = g.spacing(0).powi(2);
        assert!((e.sup_l2 - 0.5).abs() < 10.0 * h2);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((e.grad_integral - pi2 / 2.0).abs() < 10.0 * pi2 * h2, "{}", e.grad_integral);

        let padded: Vec<f64> = slice.iter().flat_map(|v| [*v, 0.0]).collect();
        let u2 = SpaceTimeField::constant_in_time(5, g.num_interior(), 2, &padded);
        assert_eq!(energy_norms(&u2, &g, &t), e);
    }
}
