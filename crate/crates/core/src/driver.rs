//! Drivers `f(t, x, y, z)` with `y in R^m` and `z` the m x d matrix whose
//! rows are `sigma grad u^i`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The `f(t, x, 0, 0)` part of a driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    None,
    Constant { value: Vec<f64> },
    /// `amplitude_i * prod_k sin(pi (x_k - lower_k) / (upper_k - lower_k))`.
    Sine { amplitude: Vec<f64> },
}

impl Default for Source {
    fn default() -> Self {
        Source::None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceField {
    source: Source,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SourceField {
    pub fn new(source: Source, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        SourceField { source, lower, upper }
    }

    fn add(&self, x: &[f64], out: &mut [f64]) {
        match &self.source {
            Source::None => {}
            Source::Constant { value } => {
                for (o, v) in out.iter_mut().zip(value) {
                    *o += v;
                }
            }
            Source::Sine { amplitude } => {
                let profile: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(k, xk)| {
                        (std::f64::consts::PI * (xk - self.lower[k]) / (self.upper[k] - self.lower[k])).sin()
                    })
                    .product();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o += a * profile;
                }
            }
        }
    }

    fn len(&self) -> Option<usize> {
        match &self.source {
            Source::None => None,
            Source::Constant { value } => Some(value.len()),
            Source::Sine { amplitude } => Some(amplitude.len()),
        }
    }
}

pub trait Driver: Send + Sync {
    fn components(&self) -> usize;
    /// Writes `f(t, x, y, z)` into `out`; `z` is row-major m x d.
    fn eval(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]);
    /// Recorded Lipschitz constants (alpha in y, beta in z).
    fn lipschitz(&self) -> (f64, f64);
    fn uses_gradient(&self) -> bool;
}

/// `f = clip(c y) + w clip(z 1) + s(x)`, where `clip` saturates each entry at
/// `+-clip` (no saturation when `clip` is infinite) and `z 1` sums each row
/// of `z`. Zero coupling, zero weight and no source gives the zero driver.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardDriver {
    m: usize,
    d: usize,
    coupling: Vec<f64>,
    clip: f64,
    gradient_weight: f64,
    source: SourceField,
    alpha: f64,
    beta: f64,
}

impl StandardDriver {
    pub fn zero(m: usize, d: usize) -> Self {
        Self::new(m, d, vec![0.0; m * m], f64::INFINITY, 0.0, SourceField::new(Source::None, vec![], vec![]))
            .expect("zero driver is valid")
    }

    pub fn new(
        m: usize,
        d: usize,
        coupling: Vec<f64>,
        clip: f64,
        gradient_weight: f64,
        source: SourceField,
    ) -> Result<Self> {
        if coupling.len() != m * m || coupling.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("driver.coupling", format!("need a finite {m}x{m} matrix")));
        }
        if !(clip > 0.0) {
            return Err(Error::validation("driver.clip", "must be positive"));
        }
        if !(gradient_weight.is_finite() && gradient_weight >= 0.0) {
            return Err(Error::validation("driver.gradient_weight", "must be finite and nonnegative"));
        }
        if let Some(len) = source.len() {
            if len != m {
                return Err(Error::validation("driver.source", format!("need {m} components")));
            }
        }
        let alpha = DMatrix::from_row_slice(m, m, &coupling).singular_values().max();
        let beta = gradient_weight * (d as f64).sqrt();
        Ok(StandardDriver {
            m,
            d,
            coupling,
            clip,
            gradient_weight,
            source,
            alpha,
            beta,
        })
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }
}

impl Driver for StandardDriver {
    fn components(&self) -> usize {
        self.m
    }

    fn eval(&self, _t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let cy: f64 = (0..m).map(|j| self.coupling[i * m + j] * y[j]).sum();
            out[i] = cy.clamp(-self.clip, self.clip);
            if self.gradient_weight != 0.0 {
                let row: f64 = z[i * self.d..(i + 1) * self.d].iter().sum();
                out[i] += self.gradient_weight * row.clamp(-self.clip, self.clip);
            }
        }
        self.source.add(x, out);
    }

    fn lipschitz(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    fn uses_gradient(&self) -> bool {
        self.gradient_weight != 0.0
    }
}

/// Largest violation of `|f(y1,z1) - f(y2,z2)| <= alpha |y1-y2| + beta |z1-z2|` on random probes.
pub fn lipschitz_probe(driver: &dyn Driver, d: usize, points: &[Vec<f64>], t: f64, probes: usize, seed: u64) -> f64 {
    let m = driver.components();
    let (alpha, beta) = driver.lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let (mut f1, mut f2) = (vec![0.0; m], vec![0.0; m]);
    for p in 0..probes {
        let x = &points[p % points.len()];
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect() };
        let (y1, y2, z1, z2) = (draw(m), draw(m), draw(m * d), draw(m * d));
        driver.eval(t, x, &y1, &z1, &mut f1);
        driver.eval(t, x, &y2, &z2, &mut f2);
        let lhs = f1.iter().zip(&f2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dy = y1.iter().zip(&y2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dz = z1.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rhs = alpha * dy + beta * dz;
        worst = worst.max(lhs - rhs * (1.0 + 1e-12));
    }
    worst
}

/// Evaluates the driver and rejects non-finite values.
pub fn driver_eval(
    driver: &dyn Driver,
    t: f64,
    node: usize,
    x: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; driver.components()];
    driver.eval(t, x, y, z, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite { time: t, node })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> SourceField {
        SourceField::new(Source::None, vec![0.0], vec![1.0])
    }

    #[test]
    fn zero_coupling_is_zero() {
        let f = StandardDriver::new(2, 1, vec![0.0; 4], f64::INFINITY, 0.0, none()).unwrap();
        let out = driver_eval(&f, 0.0, 0, &[0.3], &[1.0, -2.0], &[0.5, 0.1]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn minus_identity_has_unit_lipschitz_constant() {
        let f = StandardDriver::new(1, 1, vec![-1.0], f64::INFINITY, 0.0, none()).unwrap();
        assert_eq!(f.lipschitz(), (1.0, 0.0));
        assert!(lipschitz_probe(&f, 1, &[vec![0.5]], 0.0, 500, 1) <= 0.0);
        // the constant is tight: y1 - y2 gives equality
        let a = driver_eval(&f, 0.0, 0, &[0.5], &[2.0], &[0.0]).unwrap();
        assert_eq!(a, vec![-2.0]);
    }

    #[test]
    fn coupling_matches_matrix_product() {
        let c = vec![0.0, 0.5, -0.25, 0.0];
        let f = StandardDriver::new(2, 2, c, f64::INFINITY, 0.0, none()).unwrap();
        let out = driver_eval(&f, 0.0, 0, &[0.1, 0.2], &[3.0, 4.0], &[0.0; 4]).unwrap();
        assert_eq!(out, vec![2.0, -0.75]);
        assert!((f.lipschitz().0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clipped_driver_respects_recorded_constants() {
        let c = vec![0.3, -0.7, 0.2, 0.1];
        let src = SourceField::new(Source::Sine { amplitude: vec![1.0, -1.0] }, vec![0.0, 0.0], vec![1.0, 1.0]);
        let f = StandardDriver::new(2, 2, c, 0.5, 0.2, src).unwrap();
        assert!(f.uses_gradient());
        let pts = vec![vec![0.2, 0.3], vec![0.7, 0.5]];
        assert!(lipschitz_probe(&f, 2, &pts, 0.0, 2000, 9) <= 0.0);
    }
}
