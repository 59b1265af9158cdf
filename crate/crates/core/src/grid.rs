//! Tensor-product space grids on boxes, uniform time grids and the
//! space-time arrays that live on them.
//!
//! Unknowns are stored on interior nodes only; the zero Dirichlet boundary
//! is implicit. Interior nodes are numbered row-major (last axis fastest)
//! and a field slice interleaves components node by node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = cells.len();
        if !(1..=2).contains(&d) {
            return Err(Error::validation("domain.cells", "dimension must be 1 or 2"));
        }
        if lower.len() != d || upper.len() != d {
            return Err(Error::validation("domain", "lower/upper/cells lengths differ"));
        }
        for k in 0..d {
            if !(lower[k].is_finite() && upper[k].is_finite() && upper[k] > lower[k]) {
                return Err(Error::validation("domain", format!("axis {k} has empty extent")));
            }
            if cells[k] < 2 {
                return Err(Error::validation("domain.cells", "need at least 2 cells per axis"));
            }
        }
        Ok(SpatialGrid { lower, upper, cells })
    }

    pub fn uniform_1d(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Self::new(vec![lower], vec![upper], vec![cells])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).fold(0.0, f64::max)
    }

    /// Volume of one grid cell, the quadrature weight of an interior node.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    pub fn nodes_per_axis(&self, axis: usize) -> usize {
        self.cells[axis] + 1
    }

    fn interior_per_axis(&self, axis: usize) -> usize {
        self.cells[axis] - 1
    }

    pub fn num_nodes(&self) -> usize {
        (0..self.dim()).map(|k| self.nodes_per_axis(k)).product()
    }

    pub fn num_interior(&self) -> usize {
        (0..self.dim()).map(|k| self.interior_per_axis(k)).product()
    }

    /// Full-grid multi-index of an interior node.
    pub fn interior_multi(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx + 1, 0],
            _ => {
                let n1 = self.interior_per_axis(1);
                [idx / n1 + 1, idx % n1 + 1]
            }
        }
    }

    /// Interior index of a full-grid multi-index, `None` on the boundary.
    pub fn interior_index(&self, multi: [usize; 2]) -> Option<usize> {
        if self.is_boundary(multi) {
            return None;
        }
        match self.dim() {
            1 => Some(multi[0] - 1),
            _ => Some((multi[0] - 1) * self.interior_per_axis(1) + (multi[1] - 1)),
        }
    }

    pub fn full_multi(&self, full: usize) -> [usize; 2] {
        match self.dim() {
            1 => [full, 0],
            _ => {
                let n1 = self.nodes_per_axis(1);
                [full / n1, full % n1]
            }
        }
    }

    pub fn full_index(&self, multi: [usize; 2]) -> usize {
        match self.dim() {
            1 => multi[0],
            _ => multi[0] * self.nodes_per_axis(1) + multi[1],
        }
    }

    pub fn is_boundary(&self, multi: [usize; 2]) -> bool {
        (0..self.dim()).any(|k| multi[k] == 0 || multi[k] == self.cells[k])
    }

    /// Dirichlet mask over all nodes, row-major.
    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.num_nodes())
            .map(|f| self.is_boundary(self.full_multi(f)))
            .collect()
    }

    pub fn point(&self, multi: [usize; 2]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.lower[k] + multi[k] as f64 * self.spacing(k))
            .collect()
    }

    pub fn interior_point(&self, idx: usize) -> Vec<f64> {
        self.point(self.interior_multi(idx))
    }

    pub fn interior_points(&self) -> Vec<Vec<f64>> {
        (0..self.num_interior()).map(|i| self.interior_point(i)).collect()
    }

    /// True when `x` lies in the open box.
    pub fn contains_open(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| x[k] > self.lower[k] && x[k] < self.upper[k])
    }

    /// Scatters an interior slice (interleaved components) onto all nodes, zero on the boundary.
    pub fn extend_by_zero(&self, interior: &[f64], components: usize) -> Vec<f64> {
        let mut full = vec![0.0; self.num_nodes() * components];
        for i in 0..self.num_interior() {
            let f = self.full_index(self.interior_multi(i));
            full[f * components..(f + 1) * components]
                .copy_from_slice(&interior[i * components..(i + 1) * components]);
        }
        full
    }

    /// Nodal gradients of every component on all nodes of a full-grid field.
    ///
    /// Central differences at interior positions along each axis, one-sided at
    /// the two ends. Output layout: `[(node * components + c) * d + axis]`.
    pub fn full_gradients(&self, full: &[f64], components: usize) -> Vec<f64> {
        let d = self.dim();
        let n = self.num_nodes();
        let mut out = vec![0.0; n * components * d];
        for f in 0..n {
            let multi = self.full_multi(f);
            for axis in 0..d {
                let h = self.spacing(axis);
                let last = self.cells[axis];
                let (lo, hi, span) = if multi[axis] == 0 {
                    (multi[axis], multi[axis] + 1, h)
                } else if multi[axis] == last {
                    (multi[axis] - 1, multi[axis], h)
                } else {
                    (multi[axis] - 1, multi[axis] + 1, 2.0 * h)
                };
                let mut a = multi;
                a[axis] = lo;
                let mut b = multi;
                b[axis] = hi;
                let fa = self.full_index(a);
                let fb = self.full_index(b);
                for c in 0..components {
                    out[(f * components + c) * d + axis] =
                        (full[fb * components + c] - full[fa * components + c]) / span;
                }
            }
        }
        out
    }

    /// Central-difference gradients at interior nodes (boundary values zero).
    /// Layout: `[(node * components + c) * d + axis]`.
    pub fn interior_gradients(&self, interior: &[f64], components: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.num_interior() * components * d];
        let value = |multi: [usize; 2], c: usize| -> f64 {
            self.interior_index(multi)
                .map_or(0.0, |j| interior[j * components + c])
        };
        for i in 0..self.num_interior() {
            let multi = self.interior_multi(i);
            for axis in 0..d {
                let h = self.spacing(axis);
                let mut a = multi;
                a[axis] -= 1;
                let mut b = multi;
                b[axis] += 1;
                for c in 0..components {
                    out[(i * components + c) * d + axis] = (value(b, c) - value(a, c)) / (2.0 * h);
                }
            }
        }
        out
    }

    /// Trapezoidal weights over all nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let vol = self.cell_volume();
        (0..self.num_nodes())
            .map(|f| {
                let multi = self.full_multi(f);
                let mut w = vol;
                for k in 0..self.dim() {
                    if multi[k] == 0 || multi[k] == self.cells[k] {
                        w *= 0.5;
                    }
                }
                w
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::validation("time.horizon", "must be positive"));
        }
        if steps == 0 {
            return Err(Error::validation("time.steps", "must be at least 1"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn slices(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            horizon: self.horizon,
            steps: self.steps * factor,
        }
    }

    /// Index of the step interval `[t_k, t_{k+1})` containing `t`.
    pub fn step_containing(&self, t: f64) -> usize {
        let k = (t / self.dt() + 1e-9).floor();
        (k.max(0.0) as usize).min(self.steps - 1)
    }
}

/// Values on (time slice, interior node, component), slice-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    slices: usize,
    nodes: usize,
    components: usize,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(slices: usize, nodes: usize, components: usize) -> Self {
        SpaceTimeField {
            slices,
            nodes,
            components,
            data: vec![0.0; slices * nodes * components],
        }
    }

    pub fn from_vec(slices: usize, nodes: usize, components: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != slices * nodes * components {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                slices * nodes * components,
                data.len()
            )));
        }
        Ok(SpaceTimeField {
            slices,
            nodes,
            components,
            data,
        })
    }

    /// Repeats one slice at every time.
    pub fn constant_in_time(slices: usize, nodes: usize, components: usize, slice: &[f64]) -> Self {
        let mut data = Vec::with_capacity(slices * slice.len());
        for _ in 0..slices {
            data.extend_from_slice(slice);
        }
        SpaceTimeField {
            slices,
            nodes,
            components,
            data,
        }
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn slice_len(&self) -> usize {
        self.nodes * self.components
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let len = self.slice_len();
        &self.data[k * len..(k + 1) * len]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.slice_len();
        &mut self.data[k * len..(k + 1) * len]
    }

    pub fn at(&self, k: usize, node: usize) -> &[f64] {
        let start = (k * self.nodes + node) * self.components;
        &self.data[start..start + self.components]
    }

    pub fn same_shape(&self, other: &SpaceTimeField) -> bool {
        self.slices == other.slices && self.nodes == other.nodes && self.components == other.components
    }

    /// Keeps every `stride`-th slice, starting with slice 0.
    pub fn subsample(&self, stride: usize) -> SpaceTimeField {
        let slices = (self.slices - 1) / stride + 1;
        let mut data = Vec::with_capacity(slices * self.slice_len());
        for k in 0..slices {
            data.extend_from_slice(self.slice(k * stride));
        }
        SpaceTimeField {
            slices,
            nodes: self.nodes,
            components: self.components,
            data,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &SpaceTimeField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_numbering_round_trips() {
        let g = SpatialGrid::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![4, 5]).unwrap();
        assert_eq!(g.num_interior(), 3 * 4);
        for i in 0..g.num_interior() {
            let m = g.interior_multi(i);
            assert_eq!(g.interior_index(m), Some(i));
            assert_eq!(g.full_multi(g.full_index(m)), m);
        }
        let mask = g.boundary_mask();
        assert_eq!(mask.iter().filter(|b| !**b).count(), g.num_interior());
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(SpatialGrid::uniform_1d(0.0, 1.0, 1).is_err());
        assert!(SpatialGrid::uniform_1d(1.0, 1.0, 8).is_err());
        assert!(SpatialGrid::new(vec![0.0; 3], vec![1.0; 3], vec![4; 3]).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }

    #[test]
    fn step_lookup_is_left_closed() {
        let t = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(t.step_containing(0.0), 0);
        assert_eq!(t.step_containing(0.25), 1);
        assert_eq!(t.step_containing(0.99), 3);
        assert_eq!(t.step_containing(1.0), 3);
    }

    #[test]
    fn trapezoid_weights_integrate_constants() {
        let g = SpatialGrid::new(vec![0.0, -1.0], vec![2.0, 1.0], vec![6, 4]).unwrap();
        let total: f64 = g.trapezoid_weights().iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
    }
}
