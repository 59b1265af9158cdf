//! Bounded closed convex sets in R^m with nonempty interior.
//!
//! Three representations are supported: axis-aligned boxes, Euclidean balls
//! and bounded intersections of halfspaces. Projections onto boxes and balls
//! are closed-form. Polytope projections run Dykstra's alternating scheme and
//! then certify the result through the KKT conditions of the active face, so
//! the returned point is exact to arithmetic tolerance even when Dykstra
//! stops at its iteration cap.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{SpaceTimeField, SpatialGrid, TimeGrid};
use crate::operator::assemble;

/// Tunables for polytope projection and sampled Hausdorff distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryOptions {
    #[serde(default = "default_dykstra_tolerance")]
    pub dykstra_tolerance: f64,
    /// Dykstra sweeps are capped at `factor * m * (#halfspaces)`.
    #[serde(default = "default_dykstra_cap_factor")]
    pub dykstra_cap_factor: usize,
    /// Support directions per ambient dimension for sampled Hausdorff distances.
    #[serde(default = "default_directions_per_dim")]
    pub hausdorff_directions_per_dim: usize,
}

fn default_dykstra_tolerance() -> f64 {
    1e-12
}
fn default_dykstra_cap_factor() -> usize {
    10
}
fn default_directions_per_dim() -> usize {
    256
}

impl Default for GeometryOptions {
    fn default() -> Self {
        GeometryOptions {
            dykstra_tolerance: default_dykstra_tolerance(),
            dykstra_cap_factor: default_dykstra_cap_factor(),
            hausdorff_directions_per_dim: default_directions_per_dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallSet {
    center: Vec<f64>,
    radius: f64,
}

impl BallSet {
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `{x : <n_j, x> <= b_j for all j}` with unit normals and a certified interior point.
#[derive(Clone, Debug)]
pub struct HalfspaceIntersection {
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    interior: Vec<f64>,
    dykstra_tolerance: f64,
    dykstra_cap_factor: usize,
    vertices: OnceLock<Vec<Vec<f64>>>,
}

impl PartialEq for HalfspaceIntersection {
    fn eq(&self, other: &Self) -> bool {
        self.normals == other.normals && self.offsets == other.offsets
    }
}

impl HalfspaceIntersection {
    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
    pub fn interior_point(&self) -> &[f64] {
        &self.interior
    }

    fn dim(&self) -> usize {
        self.interior.len()
    }

    fn slack(&self, j: usize, y: &[f64]) -> f64 {
        self.offsets[j] - dot(&self.normals[j], y)
    }

    fn scale(&self, y: &[f64]) -> f64 {
        1.0 + norm_inf(y) + self.offsets.iter().fold(0.0f64, |m, b| m.max(b.abs()))
    }

    fn contains(&self, y: &[f64], tol: f64) -> bool {
        (0..self.offsets.len()).all(|j| self.slack(j, y) >= -tol)
    }

    /// Projection onto the affine face `{<n_j,x> = b_j, j in active}` with multipliers.
    fn face_projection(&self, y: &[f64], active: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = self.dim();
        let s = active.len();
        let n = DMatrix::from_fn(s, m, |r, c| self.normals[active[r]][c]);
        let gram = &n * n.transpose();
        let rhs = DVector::from_fn(s, |r, _| dot(&self.normals[active[r]], y) - self.offsets[active[r]]);
        let chol = gram.cholesky()?;
        let lambda = chol.solve(&rhs);
        let shift = n.transpose() * &lambda;
        let x: Vec<f64> = (0..m).map(|c| y[c] - shift[c]).collect();
        Some((x, lambda.iter().copied().collect()))
    }

    fn kkt_holds(&self, y: &[f64], x: &[f64], lambda: &[f64]) -> bool {
        let tol = 1e-12 * self.scale(y);
        lambda.iter().all(|&l| l >= -tol) && self.contains(x, tol)
    }

    fn project_with_face(&self, y: &[f64]) -> (Vec<f64>, Vec<usize>) {
        if self.contains(y, 0.0) {
            return (y.to_vec(), Vec::new());
        }
        let m = self.dim();
        let k = self.offsets.len();
        let scale = self.scale(y);

        let mut x = y.to_vec();
        let mut increments = vec![vec![0.0; m]; k];
        let cap = self.dykstra_cap_factor * m * k;
        for _ in 0..cap {
            let previous = x.clone();
            for j in 0..k {
                let z: Vec<f64> = (0..m).map(|c| x[c] + increments[j][c]).collect();
                let violation = dot(&self.normals[j], &z) - self.offsets[j];
                if violation > 0.0 {
                    for c in 0..m {
                        x[c] = z[c] - violation * self.normals[j][c];
                    }
                } else {
                    x.copy_from_slice(&z);
                }
                for c in 0..m {
                    increments[j][c] = z[c] - x[c];
                }
            }
            let change = previous.iter().zip(&x).fold(0.0, |a, (p, q)| f64::max(a, (p - q).abs()));
            if change <= self.dykstra_tolerance * scale {
                break;
            }
        }

        // Certify on the face Dykstra ended up on.
        let active: Vec<usize> = (0..k).filter(|&j| self.slack(j, &x) <= 1e-7 * scale).collect();
        if !active.is_empty() && active.len() <= m {
            if let Some((candidate, lambda)) = self.face_projection(y, &active) {
                if self.kkt_holds(y, &candidate, &lambda) {
                    return (candidate, active);
                }
            }
        }

        // Exhaustive search over faces of codimension <= m.
        for size in 1..=m.min(k) {
            let mut found = None;
            for_each_combination(k, size, |subset| {
                if found.is_some() {
                    return;
                }
                if let Some((candidate, lambda)) = self.face_projection(y, subset) {
                    if self.kkt_holds(y, &candidate, &lambda) {
                        found = Some((candidate, subset.to_vec()));
                    }
                }
            });
            if let Some(hit) = found {
                return hit;
            }
        }
        (x, active)
    }

    fn vertices(&self) -> &[Vec<f64>] {
        self.vertices.get_or_init(|| {
            let m = self.dim();
            let k = self.offsets.len();
            let tol = 1e-9 * self.scale(&self.interior);
            let mut out: Vec<Vec<f64>> = Vec::new();
            for_each_combination(k, m, |subset| {
                let a = DMatrix::from_fn(m, m, |r, c| self.normals[subset[r]][c]);
                let b = DVector::from_fn(m, |r, _| self.offsets[subset[r]]);
                if let Some(v) = a.lu().solve(&b) {
                    let v: Vec<f64> = v.iter().copied().collect();
                    if v.iter().all(|c| c.is_finite())
                        && self.contains(&v, tol)
                        && !out.iter().any(|w| dist_points(w, &v) < tol)
                    {
                        out.push(v);
                    }
                }
            });
            out
        })
    }

    /// Largest inscribed ball (center, radius) by linear programming.
    fn chebyshev_center(normals: &[Vec<f64>], offsets: &[f64]) -> Option<(Vec<f64>, f64)> {
        let m = normals.first()?.len();
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xs: Vec<_> = (0..m)
            .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        let r = lp.add_var(1.0, (f64::NEG_INFINITY, 1e12));
        for (n, b) in normals.iter().zip(offsets) {
            let mut terms: Vec<_> = xs.iter().zip(n).map(|(&v, &c)| (v, c)).collect();
            terms.push((r, 1.0));
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, *b);
        }
        let solution = lp.solve().ok()?.into_solution().ok()?;
        let center = xs.iter().map(|&v| solution.var_value(v)).collect();
        Some((center, solution.var_value(r)))
    }

    fn axis_support_is_finite(normals: &[Vec<f64>], offsets: &[f64], direction: &[f64]) -> bool {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xs: Vec<_> = direction
            .iter()
            .map(|&c| lp.add_var(c, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        for (n, b) in normals.iter().zip(offsets) {
            let terms: Vec<_> = xs.iter().zip(n).map(|(&v, &c)| (v, c)).collect();
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, *b);
        }
        matches!(lp.solve().map(|o| o.into_solution()), Ok(Ok(_)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    Box(BoxSet),
    Ball(BallSet),
    HalfspaceIntersection(HalfspaceIntersection),
}

impl ConvexSet {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidSet("box bounds must be nonempty and of equal length".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSet(format!("box axis {i}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(ConvexSet::Box(BoxSet { lower, upper }))
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSet("ball center must be a finite nonempty vector".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidSet(format!("ball radius must be positive, got {radius}")));
        }
        Ok(ConvexSet::Ball(BallSet { center, radius }))
    }

    pub fn new_halfspaces(normals: Vec<Vec<f64>>, offsets: Vec<f64>, interior: Vec<f64>) -> Result<Self> {
        Self::new_halfspaces_with(normals, offsets, interior, &GeometryOptions::default())
    }

    /// Normalizes the normals, certifies the interior point and checks boundedness.
    pub fn new_halfspaces_with(
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        interior: Vec<f64>,
        options: &GeometryOptions,
    ) -> Result<Self> {
        let m = interior.len();
        if m == 0 || normals.is_empty() || normals.len() != offsets.len() {
            return Err(Error::InvalidSet("need matching nonempty normals and offsets".into()));
        }
        let mut unit = Vec::with_capacity(normals.len());
        let mut scaled = Vec::with_capacity(offsets.len());
        for (j, (n, b)) in normals.iter().zip(&offsets).enumerate() {
            if n.len() != m {
                return Err(Error::InvalidSet(format!("normal {j} has wrong dimension")));
            }
            let len = norm(n);
            if !(len.is_finite() && len > 0.0 && b.is_finite()) {
                return Err(Error::InvalidSet(format!("halfspace {j} is degenerate")));
            }
            unit.push(n.iter().map(|c| c / len).collect::<Vec<_>>());
            scaled.push(b / len);
        }
        for j in 0..unit.len() {
            if dot(&unit[j], &interior) >= scaled[j] {
                return Err(Error::InvalidSet(format!(
                    "certified point is not strictly inside halfspace {j}"
                )));
            }
        }
        for axis in 0..m {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; m];
                e[axis] = sign;
                if !HalfspaceIntersection::axis_support_is_finite(&unit, &scaled, &e) {
                    return Err(Error::InvalidSet(format!(
                        "halfspace intersection is unbounded along axis {axis}"
                    )));
                }
            }
        }
        Ok(ConvexSet::HalfspaceIntersection(HalfspaceIntersection {
            normals: unit,
            offsets: scaled,
            interior,
            dykstra_tolerance: options.dykstra_tolerance,
            dykstra_cap_factor: options.dykstra_cap_factor,
            vertices: OnceLock::new(),
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box(b) => b.lower.len(),
            ConvexSet::Ball(b) => b.center.len(),
            ConvexSet::HalfspaceIntersection(p) => p.dim(),
        }
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        match self {
            ConvexSet::Box(b) => y
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol),
            ConvexSet::Ball(b) => dist_points(y, &b.center) <= b.radius + tol,
            ConvexSet::HalfspaceIntersection(p) => p.contains(y, tol),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        match self {
            ConvexSet::Box(b) => y
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect(),
            ConvexSet::Ball(b) => {
                let r = dist_points(y, &b.center);
                if r <= b.radius {
                    y.to_vec()
                } else {
                    let s = b.radius / r;
                    b.center
                        .iter()
                        .zip(y)
                        .map(|(c, v)| c + s * (v - c))
                        .collect()
                }
            }
            ConvexSet::HalfspaceIntersection(p) => p.project_with_face(y).0,
        }
    }

    /// Projection together with its Jacobian (row-major m x m).
    ///
    /// Inside the set the Jacobian is the identity; outside it is the
    /// derivative of the piece the projection lands on.
    pub fn project_with_jacobian(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.dim();
        let mut jac = identity(m);
        match self {
            ConvexSet::Box(b) => {
                let x = self.project(y);
                for i in 0..m {
                    if y[i] < b.lower[i] || y[i] > b.upper[i] {
                        jac[i * m + i] = 0.0;
                    }
                }
                (x, jac)
            }
            ConvexSet::Ball(b) => {
                let r = dist_points(y, &b.center);
                if r <= b.radius {
                    return (y.to_vec(), jac);
                }
                let s = b.radius / r;
                let u: Vec<f64> = y.iter().zip(&b.center).map(|(v, c)| (v - c) / r).collect();
                for i in 0..m {
                    for j in 0..m {
                        jac[i * m + j] = s * (if i == j { 1.0 } else { 0.0 } - u[i] * u[j]);
                    }
                }
                (self.project(y), jac)
            }
            ConvexSet::HalfspaceIntersection(p) => {
                let (x, face) = p.project_with_face(y);
                if face.is_empty() {
                    return (x, jac);
                }
                let n = DMatrix::from_fn(face.len(), m, |r, c| p.normals[face[r]][c]);
                let gram = &n * n.transpose();
                if let Some(inv) = gram.try_inverse() {
                    let proj = n.transpose() * inv * &n;
                    for i in 0..m {
                        for j in 0..m {
                            jac[i * m + j] -= proj[(i, j)];
                        }
                    }
                }
                (x, jac)
            }
        }
    }

    /// `dist(y, D)`.
    pub fn dist(&self, y: &[f64]) -> f64 {
        match self {
            ConvexSet::Ball(b) => (dist_points(y, &b.center) - b.radius).max(0.0),
            _ => dist_points(y, &self.project(y)),
        }
    }

    /// `dist(y, boundary of D)`; for points outside this equals `dist(y, D)`.
    pub fn dist_to_boundary(&self, y: &[f64]) -> f64 {
        if !self.contains(y, 0.0) {
            return self.dist(y);
        }
        match self {
            ConvexSet::Box(b) => y
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .map(|(v, (lo, hi))| (v - lo).min(hi - v))
                .fold(f64::INFINITY, f64::min),
            ConvexSet::Ball(b) => b.radius - dist_points(y, &b.center),
            ConvexSet::HalfspaceIntersection(p) => (0..p.offsets.len())
                .map(|j| p.slack(j, y))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Support function `sup_{x in D} <theta, x>`.
    pub fn support(&self, theta: &[f64]) -> f64 {
        match self {
            ConvexSet::Box(b) => theta
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .map(|(t, (lo, hi))| if *t >= 0.0 { t * hi } else { t * lo })
                .sum(),
            ConvexSet::Ball(b) => dot(theta, &b.center) + b.radius * norm(theta),
            ConvexSet::HalfspaceIntersection(p) => p
                .vertices()
                .iter()
                .map(|v| dot(theta, v))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Radius of a ball around `c` containing the set.
    pub fn radius_about(&self, c: &[f64]) -> f64 {
        match self {
            ConvexSet::Box(b) => b
                .lower
                .iter()
                .zip(&b.upper)
                .zip(c)
                .map(|((lo, hi), ci)| (lo - ci).abs().max((hi - ci).abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            ConvexSet::Ball(b) => dist_points(&b.center, c) + b.radius,
            ConvexSet::HalfspaceIntersection(p) => p
                .vertices()
                .iter()
                .map(|v| dist_points(v, c))
                .fold(0.0, f64::max),
        }
    }

    /// Smallest radius of an origin-centered ball containing the set.
    pub fn bounding_radius(&self) -> f64 {
        self.radius_about(&vec![0.0; self.dim()])
    }

    /// Axis-aligned bounding box (lower, upper).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.dim();
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            hi[i] = self.support(&e);
            e[i] = -1.0;
            lo[i] = -self.support(&e);
        }
        (lo, hi)
    }

    /// A point strictly inside the set.
    pub fn interior_point(&self) -> Vec<f64> {
        match self {
            ConvexSet::Box(b) => b.lower.iter().zip(&b.upper).map(|(l, h)| 0.5 * (l + h)).collect(),
            ConvexSet::Ball(b) => b.center.clone(),
            ConvexSet::HalfspaceIntersection(p) => p.interior.clone(),
        }
    }

    /// The set shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> ConvexSet {
        let add = |v: &[f64]| -> Vec<f64> { v.iter().zip(shift).map(|(a, b)| a + b).collect() };
        match self {
            ConvexSet::Box(b) => ConvexSet::Box(BoxSet {
                lower: add(&b.lower),
                upper: add(&b.upper),
            }),
            ConvexSet::Ball(b) => ConvexSet::Ball(BallSet {
                center: add(&b.center),
                radius: b.radius,
            }),
            ConvexSet::HalfspaceIntersection(p) => {
                let vertices = OnceLock::new();
                if let Some(v) = p.vertices.get() {
                    let _ = vertices.set(v.iter().map(|w| add(w)).collect());
                }
                ConvexSet::HalfspaceIntersection(HalfspaceIntersection {
                    normals: p.normals.clone(),
                    offsets: p.offsets.iter().zip(&p.normals).map(|(b, n)| b + dot(n, shift)).collect(),
                    interior: add(&p.interior),
                    dykstra_tolerance: p.dykstra_tolerance,
                    dykstra_cap_factor: p.dykstra_cap_factor,
                    vertices,
                })
            }
        }
    }

    /// Inner parallel set `{y in D : dist(y, boundary) >= eps}`.
    pub fn shrink(&self, eps: f64) -> Result<ConvexSet> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidSet(format!("shrink margin must be positive, got {eps}")));
        }
        match self {
            ConvexSet::Box(b) => {
                let margin = b
                    .lower
                    .iter()
                    .zip(&b.upper)
                    .map(|(l, h)| 0.5 * (h - l))
                    .fold(f64::INFINITY, f64::min)
                    - eps;
                if margin <= 0.0 {
                    return Err(Error::EmptyInterior { margin });
                }
                ConvexSet::new_box(
                    b.lower.iter().map(|l| l + eps).collect(),
                    b.upper.iter().map(|h| h - eps).collect(),
                )
            }
            ConvexSet::Ball(b) => {
                if b.radius <= eps {
                    return Err(Error::EmptyInterior { margin: b.radius - eps });
                }
                ConvexSet::new_ball(b.center.clone(), b.radius - eps)
            }
            ConvexSet::HalfspaceIntersection(p) => {
                let offsets: Vec<f64> = p.offsets.iter().map(|b| b - eps).collect();
                let (center, radius) = HalfspaceIntersection::chebyshev_center(&p.normals, &offsets)
                    .ok_or(Error::EmptyInterior { margin: -eps })?;
                if radius <= 1e-12 * p.scale(&center) {
                    return Err(Error::EmptyInterior { margin: radius });
                }
                Ok(ConvexSet::HalfspaceIntersection(HalfspaceIntersection {
                    normals: p.normals.clone(),
                    offsets,
                    interior: center,
                    dykstra_tolerance: p.dykstra_tolerance,
                    dykstra_cap_factor: p.dykstra_cap_factor,
                    vertices: OnceLock::new(),
                }))
            }
        }
    }
}

/// A Hausdorff distance with its discretization error bound (zero when exact).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HausdorffEstimate {
    pub value: f64,
    pub error_bound: f64,
}

pub fn hausdorff(a: &ConvexSet, b: &ConvexSet) -> f64 {
    hausdorff_estimate(a, b, GeometryOptions::default().hausdorff_directions_per_dim).value
}

/// Hausdorff distance, exact for box/box, ball/ball and any pair in R^1,
/// otherwise `sup_theta |h_a(theta) - h_b(theta)|` sampled over the sphere.
pub fn hausdorff_estimate(a: &ConvexSet, b: &ConvexSet, directions_per_dim: usize) -> HausdorffEstimate {
    assert_eq!(a.dim(), b.dim(), "sets live in different dimensions");
    let m = a.dim();
    match (a, b) {
        (ConvexSet::Ball(p), ConvexSet::Ball(q)) => {
            return HausdorffEstimate {
                value: dist_points(&p.center, &q.center) + (p.radius - q.radius).abs(),
                error_bound: 0.0,
            }
        }
        (ConvexSet::Box(p), ConvexSet::Box(q)) => {
            let one_sided = |x: &BoxSet, y: &BoxSet| -> f64 {
                (0..m)
                    .map(|i| {
                        let d = |v: f64| (y.lower[i] - v).max(v - y.upper[i]).max(0.0);
                        d(x.lower[i]).max(d(x.upper[i])).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt()
            };
            return HausdorffEstimate {
                value: one_sided(p, q).max(one_sided(q, p)),
                error_bound: 0.0,
            };
        }
        _ => {}
    }
    if m == 1 {
        let value = (a.support(&[1.0]) - b.support(&[1.0]))
            .abs()
            .max((a.support(&[-1.0]) - b.support(&[-1.0])).abs());
        return HausdorffEstimate { value, error_bound: 0.0 };
    }
    // Support functions differ by <theta, c> under translation; recentering shrinks the Lipschitz bound.
    let (alo, ahi) = a.bounding_box();
    let (blo, bhi) = b.bounding_box();
    let center: Vec<f64> = (0..m).map(|i| 0.25 * (alo[i] + ahi[i] + blo[i] + bhi[i])).collect();
    let lipschitz = a.radius_about(&center) + b.radius_about(&center);
    let dirs = direction_set(m, directions_per_dim.max(1) * m);
    let value = dirs
        .directions
        .iter()
        .map(|t| (a.support(t) - b.support(t)).abs())
        .fold(0.0, f64::max);
    HausdorffEstimate {
        value,
        error_bound: lipschitz * dirs.covering_radius,
    }
}

struct DirectionSet {
    directions: Vec<Vec<f64>>,
    covering_radius: f64,
}

/// Deterministic low-discrepancy unit directions, cached per (dimension, count).
fn direction_set(m: usize, count: usize) -> Arc<DirectionSet> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<DirectionSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&(m, count)) {
        return hit.clone();
    }
    let set = Arc::new(build_direction_set(m, count));
    cache.lock().unwrap().insert((m, count), set.clone());
    set
}

fn build_direction_set(m: usize, count: usize) -> DirectionSet {
    if m == 2 {
        let directions = (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let covering_radius = 2.0 * (std::f64::consts::PI / (2.0 * count as f64)).sin();
        return DirectionSet { directions, covering_radius };
    }
    let directions = sphere_points(m, count, 0.0);
    // Covering radius estimated against an independent, denser probe set.
    let probes = sphere_points(m, 8 * count, 0.5);
    let covering_radius = probes
        .iter()
        .map(|p| {
            directions
                .iter()
                .map(|d| dist_points(p, d))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    DirectionSet { directions, covering_radius }
}

fn sphere_points(m: usize, count: usize, offset: f64) -> Vec<Vec<f64>> {
    if m == 3 {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        return (0..count)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * std::f64::consts::PI * ((k as f64 / golden + offset) % 1.0);
                vec![r * phi.cos(), r * phi.sin(), z]
            })
            .collect();
    }
    // Kronecker sequence on the cube, pushed to the sphere.
    let alpha = generalized_golden(m);
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count {
        k += 1;
        let p: Vec<f64> = (0..m)
            .map(|i| 2.0 * ((offset + k as f64 * alpha[i]) % 1.0) - 1.0)
            .collect();
        let len = norm(&p);
        if len > 1e-3 && len <= 1.0 {
            out.push(p.iter().map(|c| c / len).collect());
        }
    }
    out
}

fn generalized_golden(m: usize) -> Vec<f64> {
    let mut g = 2.0f64;
    for _ in 0..64 {
        g = (1.0 + g).powf(1.0 / (m as f64 + 1.0));
    }
    (1..=m).map(|i| (1.0 / g.powi(i as i32)) % 1.0).collect()
}

// ----- obstacle families -----------------------------------------------------

/// The map `(t, x) -> D(t, x)`.
pub trait ObstacleFamily: Send + Sync {
    fn components(&self) -> usize;
    fn set_at(&self, t: f64, x: &[f64]) -> ConvexSet;
    /// Radius of an origin-centered ball containing every set of the family.
    fn uniform_bound(&self) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// Largest Hausdorff distance between time-adjacent sets at a fixed node.
    pub time_modulus: f64,
    /// Largest Hausdorff distance between space-adjacent sets at a fixed time.
    pub space_modulus: f64,
    pub max_modulus: f64,
    /// Largest sampling error bound among the distances above.
    pub error_bound: f64,
    pub max_set_radius: f64,
    pub uniform_bound: f64,
    pub pairs_checked: usize,
}

/// Grid certificate of uniform boundedness and continuity of the family.
pub fn validate_d1(
    family: &dyn ObstacleFamily,
    grid: &SpatialGrid,
    time: &TimeGrid,
    options: &GeometryOptions,
    exec: Exec,
) -> Result<ContinuityReport> {
    let nodes = grid.num_nodes();
    let points: Vec<Vec<f64>> = (0..nodes).map(|f| grid.point(grid.full_multi(f))).collect();
    let slices: Vec<Vec<ConvexSet>> = exec.map(time.slices(), |k| {
        points.iter().map(|x| family.set_at(time.time(k), x)).collect()
    });
    let bound = family.uniform_bound();
    let mut max_radius: f64 = 0.0;
    for (k, slice) in slices.iter().enumerate() {
        for (f, set) in slice.iter().enumerate() {
            let r = set.bounding_radius();
            max_radius = max_radius.max(r);
            if r > bound * (1.0 + 1e-12) {
                return Err(Error::UniformBoundViolated { step: k, node: f, radius: r, bound });
            }
        }
    }
    let dirs = options.hausdorff_directions_per_dim;
    let per_slice: Vec<(f64, f64, f64, usize)> = exec.map(time.slices(), |k| {
        let (mut tm, mut sm, mut err, mut count) = (0.0f64, 0.0f64, 0.0f64, 0usize);
        for f in 0..nodes {
            if k + 1 < time.slices() {
                let h = hausdorff_estimate(&slices[k][f], &slices[k + 1][f], dirs);
                tm = tm.max(h.value);
                err = err.max(h.error_bound);
                count += 1;
            }
            let multi = grid.full_multi(f);
            for axis in 0..grid.dim() {
                if multi[axis] < grid.cells()[axis] {
                    let mut next = multi;
                    next[axis] += 1;
                    let h = hausdorff_estimate(&slices[k][f], &slices[k][grid.full_index(next)], dirs);
                    sm = sm.max(h.value);
                    err = err.max(h.error_bound);
                    count += 1;
                }
            }
        }
        (tm, sm, err, count)
    });
    let mut report = ContinuityReport {
        time_modulus: 0.0,
        space_modulus: 0.0,
        max_modulus: 0.0,
        error_bound: 0.0,
        max_set_radius: max_radius,
        uniform_bound: bound,
        pairs_checked: 0,
    };
    for (tm, sm, err, count) in per_slice {
        report.time_modulus = report.time_modulus.max(tm);
        report.space_modulus = report.space_modulus.max(sm);
        report.error_bound = report.error_bound.max(err);
        report.pairs_checked += count;
    }
    report.max_modulus = report.time_modulus.max(report.space_modulus);
    Ok(report)
}

/// A candidate `u*` kept `epsilon`-deep inside the obstacle, with optional
/// terminal data and source for which it should solve the linear equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationWitness {
    pub epsilon: f64,
    pub values: SpaceTimeField,
    pub terminal: Option<Vec<f64>>,
    pub source: Option<SpaceTimeField>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// `min over nodes of dist(u*, boundary of D) - epsilon`.
    pub worst_margin: f64,
    /// Relative L2 residual of the linear equation for `u*`, when a source is supplied.
    pub pde_residual: Option<f64>,
    pub residual_tolerance: f64,
    pub passed: bool,
}

/// Checks `u*(t,x)` lies in the `epsilon`-shrunken obstacle at every interior node.
pub fn validate_d2(
    family: &dyn ObstacleFamily,
    witness: &SeparationWitness,
    grid: &SpatialGrid,
    time: &TimeGrid,
    coefficient: Option<&dyn CoefficientField>,
    residual_tolerance: f64,
) -> Result<SeparationReport> {
    let m = family.components();
    let nodes = grid.num_interior();
    if witness.values.slices() != time.slices()
        || witness.values.nodes() != nodes
        || witness.values.components() != m
    {
        return Err(Error::Shape("witness does not match the scenario grid".into()));
    }
    if !(witness.epsilon > 0.0) {
        return Err(Error::validation("witness.epsilon", "must be positive"));
    }
    let points = grid.interior_points();
    let mut worst = f64::INFINITY;
    for k in 0..time.slices() {
        let t = time.time(k);
        for (i, x) in points.iter().enumerate() {
            let set = family.set_at(t, x);
            let margin = match set.shrink(witness.epsilon) {
                Ok(_) => {
                    let y = witness.values.at(k, i);
                    if set.contains(y, 0.0) {
                        set.dist_to_boundary(y) - witness.epsilon
                    } else {
                        -set.dist(y) - witness.epsilon
                    }
                }
                Err(Error::EmptyInterior { margin }) => margin,
                Err(e) => return Err(e),
            };
            if margin < -1e-12 {
                return Err(Error::MarginViolated { step: k, node: i, margin });
            }
            worst = worst.min(margin);
        }
    }
    let pde_residual = match (&witness.source, coefficient) {
        (Some(source), Some(a)) => Some(witness_residual(witness, source, grid, time, a)?),
        _ => None,
    };
    let passed = pde_residual.is_none_or(|r| r <= residual_tolerance);
    Ok(SeparationReport {
        worst_margin: worst,
        pde_residual,
        residual_tolerance,
        passed,
    })
}

/// Relative residual of `du*/dt + L u* + f* = 0`, `u*(T) = phi*` on the grid.
fn witness_residual(
    witness: &SeparationWitness,
    source: &SpaceTimeField,
    grid: &SpatialGrid,
    time: &TimeGrid,
    coefficient: &dyn CoefficientField,
) -> Result<f64> {
    let u = &witness.values;
    if !source.same_shape(u) {
        return Err(Error::Shape("witness source does not match the grid".into()));
    }
    let m = u.components();
    let dt = time.dt();
    let last = time.steps();
    let (mut res, mut scale) = (0.0, 0.0);
    for k in 0..=last {
        let op = assemble(coefficient, grid, time.time(k), Exec::Sequential)?;
        let au = op.apply_interleaved(u.slice(k), m);
        let (prev, next, span) = if k == 0 {
            (0, 1, dt)
        } else if k == last {
            (last - 1, last, dt)
        } else {
            (k - 1, k + 1, 2.0 * dt)
        };
        let w = if k == 0 || k == last { 0.5 } else { 1.0 };
        for j in 0..u.slice(k).len() {
            let dudt = (u.slice(next)[j] - u.slice(prev)[j]) / span;
            let f = source.slice(k)[j];
            res += w * (dudt + au[j] + f).powi(2);
            scale += w * (f.powi(2) + dudt.powi(2));
        }
    }
    let mut rel = (res / scale.max(f64::MIN_POSITIVE)).sqrt();
    if let Some(phi) = &witness.terminal {
        let mismatch = phi
            .iter()
            .zip(u.slice(last))
            .fold(0.0, |a: f64, (p, q)| a.max((p - q).abs()));
        rel = rel.max(mismatch / (1.0 + norm_inf(phi)));
    }
    Ok(rel)
}

// ----- small vector helpers --------------------------------------------------

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn dist_points(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn identity(m: usize) -> Vec<f64> {
    let mut id = vec![0.0; m * m];
    for i in 0..m {
        id[i * m + i] = 1.0;
    }
    id
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_simplex() -> ConvexSet {
        ConvexSet::new_halfspaces(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 1.0],
            vec![0.25, 0.25],
        )
        .unwrap()
    }

    /// Dense-grid argmin of |y - x| over the simplex, refined locally.
    fn brute_force_simplex_projection(y: &[f64]) -> Vec<f64> {
        let mut best = (f64::INFINITY, vec![0.0, 0.0]);
        let (mut cx, mut cy, mut span) = (0.5, 0.5, 1.0);
        for _ in 0..6 {
            let steps = 400;
            for i in 0..=steps {
                for j in 0..=steps {
                    let x0 = cx - span / 2.0 + span * i as f64 / steps as f64;
                    let x1 = cy - span / 2.0 + span * j as f64 / steps as f64;
                    if x0 < 0.0 || x1 < 0.0 || x0 + x1 > 1.0 {
                        continue;
                    }
                    let d = (y[0] - x0).powi(2) + (y[1] - x1).powi(2);
                    if d < best.0 {
                        best = (d, vec![x0, x1]);
                    }
                }
            }
            cx = best.1[0];
            cy = best.1[1];
            span /= 20.0;
        }
        best.1
    }

    #[test]
    fn simplex_projection_matches_grid_oracle() {
        // Oracle value frozen from the dense-grid search: (1, 0).
        let oracle = brute_force_simplex_projection(&[2.0, -1.0]);
        assert!(dist_points(&oracle, &[1.0, 0.0]) < 1e-6);
        let p = unit_simplex().project(&[2.0, -1.0]);
        assert!(dist_points(&p, &[1.0, 0.0]) < 1e-12, "{p:?}");

        for y in [[0.9, 0.9], [-0.3, 0.4], [0.2, -2.0], [-1.0, -1.0], [3.0, 0.5]] {
            let p = unit_simplex().project(&y);
            let o = brute_force_simplex_projection(&y);
            assert!(dist_points(&p, &o) < 1e-6, "y={y:?} p={p:?} oracle={o:?}");
        }
    }

    #[test]
    fn closed_form_projections() {
        let b = ConvexSet::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(b.project(&[0.5, 0.5]), vec![0.5, 0.5]);
        let ball = ConvexSet::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = ball.project(&[3.0, 4.0]);
        assert!(dist_points(&p, &[0.6, 0.8]) < 1e-15);
    }

    #[test]
    fn distances() {
        let ball = ConvexSet::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(ball.dist(&[0.0, 0.0]), 0.0);
        assert!((ball.dist(&[3.0, 4.0]) - 4.0).abs() < 1e-15);
        let b = ConvexSet::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((b.dist(&[2.0, 2.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    /// Brute-force sup-inf over dense samples of both boxes.
    fn sampled_box_hausdorff(a: (f64, f64), b: (f64, f64)) -> f64 {
        let n = 60;
        let pts = |lo: f64, hi: f64| -> Vec<[f64; 2]> {
            let mut v = Vec::new();
            for i in 0..=n {
                for j in 0..=n {
                    v.push([lo + (hi - lo) * i as f64 / n as f64, lo + (hi - lo) * j as f64 / n as f64]);
                }
            }
            v
        };
        let box_dist = |p: &[f64; 2], lo: f64, hi: f64| -> f64 {
            let d0 = (lo - p[0]).max(p[0] - hi).max(0.0);
            let d1 = (lo - p[1]).max(p[1] - hi).max(0.0);
            (d0 * d0 + d1 * d1).sqrt()
        };
        let one = |x: (f64, f64), y: (f64, f64)| {
            pts(x.0, x.1).iter().map(|p| box_dist(p, y.0, y.1)).fold(0.0, f64::max)
        };
        one(a, b).max(one(b, a))
    }

    #[test]
    fn hausdorff_closed_forms() {
        let b1 = ConvexSet::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        let b2 = ConvexSet::new_ball(vec![0.0, 0.0], 2.0).unwrap();
        assert_eq!(hausdorff(&b1, &b2), 1.0);
        assert_eq!(hausdorff(&b1, &b1), 0.0);
        let oracle = sampled_box_hausdorff((0.0, 1.0), (0.0, 2.0));
        assert!((oracle - 2f64.sqrt()).abs() < 1e-12);
        let q1 = ConvexSet::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let q2 = ConvexSet::new_box(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        assert!((hausdorff(&q1, &q2) - oracle).abs() < 1e-12);
    }

    #[test]
    fn sampled_hausdorff_brackets_exact_value() {
        // Box [0,1]^2 written as halfspaces versus the closed-form box.
        let poly = ConvexSet::new_halfspaces(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.5, 0.5],
        )
        .unwrap();
        let big = ConvexSet::new_box(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let est = hausdorff_estimate(&poly, &big, 256);
        let exact = 2f64.sqrt();
        assert!(est.value <= exact + 1e-12);
        assert!(est.value + est.error_bound >= exact);
        let same = ConvexSet::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(hausdorff(&poly, &same) < 1e-12);
    }

    #[test]
    fn shrinking() {
        let b = ConvexSet::new_box(vec![0.0, 0.0], vec![3.0, 3.0]).unwrap();
        assert_eq!(b.shrink(1.0).unwrap(), ConvexSet::new_box(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap());
        let ball = ConvexSet::new_ball(vec![0.0, 0.0], 2.0).unwrap();
        assert_eq!(ball.shrink(0.5).unwrap(), ConvexSet::new_ball(vec![0.0, 0.0], 1.5).unwrap());
        let unit = ConvexSet::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(unit.shrink(1.5), Err(Error::EmptyInterior { .. })));

        let s = unit_simplex().shrink(0.1).unwrap();
        // inradius of the unit simplex is 1/(2+sqrt 2)
        assert!(s.contains(&s.interior_point(), 0.0));
        assert!(matches!(unit_simplex().shrink(0.3), Err(Error::EmptyInterior { .. })));
    }

    #[test]
    fn construction_rejects_bad_sets() {
        assert!(ConvexSet::new_box(vec![1.0], vec![1.0]).is_err());
        assert!(ConvexSet::new_ball(vec![0.0], 0.0).is_err());
        // unbounded: a single halfspace
        assert!(ConvexSet::new_halfspaces(vec![vec![1.0, 0.0]], vec![1.0], vec![0.0, 0.0]).is_err());
        // interior point on the boundary
        assert!(ConvexSet::new_halfspaces(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.5],
        )
        .is_err());
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let sets = [
            ConvexSet::new_ball(vec![0.1, -0.2], 0.7).unwrap(),
            ConvexSet::new_box(vec![-1.0, 0.0], vec![0.5, 2.0]).unwrap(),
            unit_simplex(),
        ];
        let points = [[1.3, 0.4], [2.0, -0.7], [0.6, 0.9], [-0.5, 0.3]];
        for set in &sets {
            for y in &points {
                let (_, jac) = set.project_with_jacobian(y);
                for j in 0..2 {
                    let h = 1e-7;
                    let mut yp = y.to_vec();
                    yp[j] += h;
                    let mut ym = y.to_vec();
                    ym[j] -= h;
                    let (pp, pm) = (set.project(&yp), set.project(&ym));
                    for i in 0..2 {
                        let fd = (pp[i] - pm[i]) / (2.0 * h);
                        assert!((fd - jac[i * 2 + j]).abs() < 1e-5, "{set:?} y={y:?}");
                    }
                }
            }
        }
    }

    struct GrowingBall;
    impl ObstacleFamily for GrowingBall {
        fn components(&self) -> usize {
            2
        }
        fn set_at(&self, t: f64, _x: &[f64]) -> ConvexSet {
            ConvexSet::new_ball(vec![0.0, 0.0], 1.0 + t).unwrap()
        }
        fn uniform_bound(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn continuity_of_growing_ball_is_the_time_step() {
        let grid = SpatialGrid::uniform_1d(0.0, 1.0, 4).unwrap();
        let time = TimeGrid::new(1.0, 8).unwrap();
        let r = validate_d1(&GrowingBall, &grid, &time, &GeometryOptions::default(), Exec::Sequential).unwrap();
        assert!((r.time_modulus - 0.125).abs() < 1e-15);
        assert_eq!(r.space_modulus, 0.0);
        assert!((r.max_set_radius - 2.0).abs() < 1e-15);
    }

    struct TooBig;
    impl ObstacleFamily for TooBig {
        fn components(&self) -> usize {
            1
        }
        fn set_at(&self, _t: f64, x: &[f64]) -> ConvexSet {
            ConvexSet::new_ball(vec![0.0], 1.0 + x[0]).unwrap()
        }
        fn uniform_bound(&self) -> f64 {
            1.5
        }
    }

    #[test]
    fn escaping_sets_are_flagged() {
        let grid = SpatialGrid::uniform_1d(0.0, 1.0, 4).unwrap();
        let time = TimeGrid::new(1.0, 2).unwrap();
        let err = validate_d1(&TooBig, &grid, &time, &GeometryOptions::default(), Exec::Sequential);
        assert!(matches!(err, Err(Error::UniformBoundViolated { .. })));
    }

    #[test]
    fn separation_with_zero_witness() {
        let grid = SpatialGrid::uniform_1d(0.0, 1.0, 4).unwrap();
        let time = TimeGrid::new(1.0, 2).unwrap();
        let w = SeparationWitness {
            epsilon: 0.5,
            values: SpaceTimeField::zeros(3, 3, 2),
            terminal: None,
            source: None,
        };
        let rep = validate_d2(&GrowingBall, &w, &grid, &time, None, 0.0).unwrap();
        assert!(rep.passed);
        assert!((rep.worst_margin - 0.5).abs() < 1e-15);

        let outside = SeparationWitness {
            epsilon: 0.1,
            values: SpaceTimeField::constant_in_time(3, 3, 2, &[2.5, 0.0, 2.5, 0.0, 2.5, 0.0]),
            terminal: None,
            source: None,
        };
        assert!(matches!(
            validate_d2(&GrowingBall, &outside, &grid, &time, None, 0.0),
            Err(Error::MarginViolated { .. })
        ));
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![0, 1]);
        assert_eq!(seen[5], vec![2, 3]);
    }
}
