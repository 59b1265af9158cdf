//! Random convex sets and the projection laws checked against them.
#![allow(dead_code)]

use obstacle_core::geometry::{hausdorff_estimate, ConvexSet, GeometryOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SLACK: f64 = 1e-9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn point(rng: &mut impl Rng, m: usize, r: f64) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(-r..r)).collect()
}

fn unit(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    loop {
        let v = point(rng, m, 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

pub fn random_box(rng: &mut impl Rng, m: usize) -> ConvexSet {
    let lower = point(rng, m, 2.0);
    let upper = lower.iter().map(|l| l + rng.gen_range(0.1..3.0)).collect();
    ConvexSet::new_box(lower, upper).unwrap()
}

pub fn random_ball(rng: &mut impl Rng, m: usize) -> ConvexSet {
    ConvexSet::new_ball(point(rng, m, 2.0), rng.gen_range(0.1..3.0)).unwrap()
}

/// A bounded polytope around a random centre; retries until the normals span.
pub fn random_polytope(rng: &mut impl Rng, m: usize) -> ConvexSet {
    loop {
        let c = point(rng, m, 1.5);
        let k = rng.gen_range(m + 1..=m + 4);
        let normals: Vec<Vec<f64>> = (0..k).map(|_| unit(rng, m)).collect();
        let offsets = normals
            .iter()
            .map(|n| n.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(0.2..2.0))
            .collect();
        if let Ok(set) = ConvexSet::new_halfspaces(normals, offsets, c) {
            return set;
        }
    }
}

pub fn random_set(rng: &mut impl Rng, m: usize) -> ConvexSet {
    match rng.gen_range(0..3) {
        0 => random_box(rng, m),
        1 => random_ball(rng, m),
        _ => random_polytope(rng, m),
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Upper bound on the Hausdorff distance.
pub fn rho_upper(a: &ConvexSet, b: &ConvexSet) -> f64 {
    let e = hausdorff_estimate(a, b, GeometryOptions::default().hausdorff_directions_per_dim);
    e.value + e.error_bound
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LawTally {
    pub checks: usize,
    pub membership: usize,
    pub normal_cone: usize,
    pub fixed_points: usize,
    pub nonexpansive: usize,
    pub idempotent: usize,
    pub two_set_bound: usize,
    pub interior_angle: usize,
    pub triangle: usize,
}

impl LawTally {
    pub fn violations(&self) -> usize {
        self.membership
            + self.normal_cone
            + self.fixed_points
            + self.nonexpansive
            + self.idempotent
            + self.two_set_bound
            + self.interior_angle
            + self.triangle
    }
}

/// One randomized instance: sets `D, G, H` of a random kind in `R^m`, points `x, y`.
pub fn check_instance(seed: u64, tally: &mut LawTally) {
    let mut r = rng(seed);
    let m = r.gen_range(1..=3);
    let d = random_set(&mut r, m);
    let g = random_set(&mut r, m);
    let x = point(&mut r, m, 5.0);
    let y = point(&mut r, m, 5.0);
    let px = d.project(&x);
    let py = d.project(&y);
    let scale = 1.0 + norm(&x).max(norm(&y)).powi(2);
    tally.checks += 1;

    if !d.contains(&px, SLACK) {
        tally.membership += 1;
    }
    // Obtuse angle with every admissible point, sampled through projections.
    let residual = sub(&x, &px);
    for _ in 0..4 {
        let z = d.project(&point(&mut r, m, 5.0));
        if dot(&residual, &sub(&z, &px)) > SLACK * scale {
            tally.normal_cone += 1;
        }
    }
    if d.contains(&x, 0.0) != (norm(&residual) <= SLACK * scale.sqrt()) {
        tally.fixed_points += 1;
    }
    if norm(&sub(&px, &py)) > norm(&sub(&x, &y)) + SLACK * scale.sqrt() {
        tally.nonexpansive += 1;
    }
    if norm(&sub(&d.project(&px), &px)) > SLACK * scale.sqrt() {
        tally.idempotent += 1;
    }
    // |Pi_D x - Pi_G y|^2 <= |x - y|^2 + 2 (dist(x, D) + dist(y, G)) rho(D, G).
    let gy = g.project(&y);
    let lhs = norm(&sub(&px, &gy)).powi(2);
    let rhs = norm(&sub(&x, &y)).powi(2) + 2.0 * (d.dist(&x) + g.dist(&y)) * rho_upper(&d, &g);
    if lhs > rhs + SLACK * scale {
        tally.two_set_bound += 1;
    }
    // <x - a, Pi x - x> <= -dist(a, boundary) |Pi x - x| for interior a and exterior x.
    if !d.contains(&x, 0.0) {
        let a = d.interior_point();
        let step = sub(&px, &x);
        if dot(&sub(&x, &a), &step) > -d.dist_to_boundary(&a) * norm(&step) + SLACK * scale {
            tally.interior_angle += 1;
        }
    }
    let h = random_set(&mut r, m);
    let e = |p: &ConvexSet, q: &ConvexSet| hausdorff_estimate(p, q, GeometryOptions::default().hausdorff_directions_per_dim).value;
    if e(&d, &h) > rho_upper(&d, &g) + rho_upper(&g, &h) + SLACK * scale.sqrt() {
        tally.triangle += 1;
    }
}
