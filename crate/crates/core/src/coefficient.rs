//! Symmetric, uniformly elliptic diffusion coefficients `a(t, x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symmetric d x d matrix with d in {1, 2}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    pub dim: usize,
    /// Row-major entries; unused entries are zero.
    pub m: [[f64; 2]; 2],
}

impl SymTensor {
    pub fn scalar(a: f64) -> Self {
        SymTensor {
            dim: 1,
            m: [[a, 0.0], [0.0, 0.0]],
        }
    }

    pub fn new_2d(a11: f64, a12: f64, a22: f64) -> Self {
        SymTensor {
            dim: 2,
            m: [[a11, a12], [a12, a22]],
        }
    }

    pub fn identity(dim: usize) -> Self {
        match dim {
            1 => Self::scalar(1.0),
            _ => Self::new_2d(1.0, 0.0, 1.0),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        match rows.len() {
            1 if rows[0].len() == 1 => Ok(Self::scalar(rows[0][0])),
            2 if rows.iter().all(|r| r.len() == 2) => {
                if rows[0][1] != rows[1][0] {
                    return Err(Error::validation("coefficient", "matrix must be symmetric"));
                }
                Ok(Self::new_2d(rows[0][0], rows[0][1], rows[1][1]))
            }
            _ => Err(Error::validation("coefficient", "matrix must be 1x1 or 2x2")),
        }
    }

    pub fn quad(&self, y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += y[i] * self.m[i][j] * y[j];
            }
        }
        s
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        if self.dim == 1 {
            return (self.m[0][0], self.m[0][0]);
        }
        let (a, b, c) = (self.m[0][0], self.m[0][1], self.m[1][1]);
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    /// Smallest `L >= 1` with `L^-1 |y|^2 <= y^T a y <= L |y|^2`.
    pub fn ellipticity(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        if lo <= 0.0 {
            return f64::INFINITY;
        }
        hi.max(1.0 / lo).max(1.0)
    }

    /// Symmetric positive square root.
    pub fn sqrt(&self) -> SymTensor {
        if self.dim == 1 {
            return SymTensor::scalar(self.m[0][0].sqrt());
        }
        let (a, b, c) = (self.m[0][0], self.m[0][1], self.m[1][1]);
        let s = (a * c - b * b).max(0.0).sqrt();
        let t = (a + c + 2.0 * s).sqrt();
        SymTensor::new_2d((a + s) / t, b / t, (c + s) / t)
    }

    pub fn mul(&self, other: &SymTensor) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    out[i][j] += self.m[i][k] * other.m[k][j];
                }
            }
        }
        out
    }

    /// `y = self * x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.dim {
            y[i] = (0..self.dim).map(|j| self.m[i][j] * x[j]).sum();
        }
    }
}

pub trait CoefficientField: Send + Sync {
    fn dim(&self) -> usize;
    fn at(&self, t: f64, x: &[f64]) -> SymTensor;
    /// Declared ellipticity constant.
    fn ellipticity(&self) -> f64;

    fn sigma(&self, t: f64, x: &[f64]) -> SymTensor {
        self.at(t, x).sqrt()
    }

    /// True when the field does not depend on time.
    fn autonomous(&self) -> bool {
        false
    }
}

/// Checks the ellipticity sandwich on coordinate and diagonal probes and
/// that the square root reproduces the matrix.
pub fn probe_ellipticity(field: &dyn CoefficientField, t: f64, node: usize, x: &[f64]) -> Result<SymTensor> {
    let a = field.at(t, x);
    let lambda = field.ellipticity();
    let probes: &[[f64; 2]] = if a.dim == 1 {
        &[[1.0, 0.0]]
    } else {
        &[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]]
    };
    let slack = 1e-12;
    let mut ok = a.m.iter().flatten().all(|v| v.is_finite());
    for y in probes {
        let n2: f64 = y[..a.dim].iter().map(|v| v * v).sum();
        let q = a.quad(y);
        ok &= q >= n2 / lambda * (1.0 - slack) && q <= n2 * lambda * (1.0 + slack);
    }
    let (lo, hi) = a.eigenvalues();
    ok &= lo >= (1.0 - slack) / lambda && hi <= lambda * (1.0 + slack);
    if ok {
        let s = a.sqrt();
        let ss = s.mul(&s);
        let scale = 1.0 + hi.abs();
        for i in 0..a.dim {
            for j in 0..a.dim {
                ok &= (ss[i][j] - a.m[i][j]).abs() <= 1e-10 * scale;
            }
        }
    }
    if ok {
        Ok(a)
    } else {
        Err(Error::EllipticityViolated { time: t, node })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantCoefficient {
    pub a: SymTensor,
    pub lambda: f64,
}

impl ConstantCoefficient {
    pub fn new(a: SymTensor) -> Self {
        ConstantCoefficient {
            lambda: a.ellipticity(),
            a,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(SymTensor::identity(dim))
    }
}

impl CoefficientField for ConstantCoefficient {
    fn dim(&self) -> usize {
        self.a.dim
    }
    fn at(&self, _t: f64, _x: &[f64]) -> SymTensor {
        self.a
    }
    fn ellipticity(&self) -> f64 {
        self.lambda
    }
    fn autonomous(&self) -> bool {
        true
    }
}

/// Two materials separated by the plane `x[axis] = split`; the right value applies on the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseCoefficient {
    pub axis: usize,
    pub split: f64,
    pub left: SymTensor,
    pub right: SymTensor,
    pub lambda: f64,
}

impl PiecewiseCoefficient {
    pub fn new(axis: usize, split: f64, left: SymTensor, right: SymTensor) -> Result<Self> {
        if left.dim != right.dim || axis >= left.dim {
            return Err(Error::validation("coefficient.axis", "axis or material dimensions inconsistent"));
        }
        Ok(PiecewiseCoefficient {
            axis,
            split,
            left,
            right,
            lambda: left.ellipticity().max(right.ellipticity()),
        })
    }
}

impl CoefficientField for PiecewiseCoefficient {
    fn dim(&self) -> usize {
        self.left.dim
    }
    fn at(&self, _t: f64, x: &[f64]) -> SymTensor {
        if x[self.axis] < self.split {
            self.left
        } else {
            self.right
        }
    }
    fn ellipticity(&self) -> f64 {
        self.lambda
    }
    fn autonomous(&self) -> bool {
        true
    }
}

/// `R(angle) diag(major, minor) R(angle)^T` with `angle = angular_speed * t + twist * (x1 + x2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotatingAnisotropy {
    pub major: f64,
    pub minor: f64,
    pub angular_speed: f64,
    pub twist: f64,
}

impl RotatingAnisotropy {
    pub fn new(major: f64, minor: f64, angular_speed: f64, twist: f64) -> Result<Self> {
        if !(minor > 0.0 && major >= minor && major.is_finite()) {
            return Err(Error::validation(
                "coefficient",
                "rotating anisotropy needs 0 < minor <= major",
            ));
        }
        Ok(RotatingAnisotropy {
            major,
            minor,
            angular_speed,
            twist,
        })
    }
}

impl CoefficientField for RotatingAnisotropy {
    fn dim(&self) -> usize {
        2
    }
    fn at(&self, t: f64, x: &[f64]) -> SymTensor {
        let angle = self.angular_speed * t + self.twist * (x[0] + x[1]);
        let (s, c) = angle.sin_cos();
        let a11 = self.major * c * c + self.minor * s * s;
        let a22 = self.major * s * s + self.minor * c * c;
        let a12 = (self.major - self.minor) * s * c;
        SymTensor::new_2d(a11, a12, a22)
    }
    fn ellipticity(&self) -> f64 {
        self.major.max(1.0 / self.minor).max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        for a in [
            SymTensor::new_2d(2.0, 0.3, 1.0),
            SymTensor::new_2d(1.0, 0.0, 1.0),
            SymTensor::new_2d(5.0, -1.9, 0.9),
            SymTensor::scalar(4.0),
        ] {
            let s = a.sqrt();
            let ss = s.mul(&s);
            for i in 0..a.dim {
                for j in 0..a.dim {
                    assert!((ss[i][j] - a.m[i][j]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn ellipticity_constant() {
        assert_eq!(SymTensor::scalar(4.0).ellipticity(), 4.0);
        assert_eq!(SymTensor::scalar(0.25).ellipticity(), 4.0);
        assert_eq!(SymTensor::identity(2).ellipticity(), 1.0);
    }

    #[test]
    fn rotating_field_keeps_spectrum() {
        let r = RotatingAnisotropy::new(3.0, 0.5, 2.0, 0.7).unwrap();
        for t in [0.0, 0.3, 1.1] {
            let (lo, hi) = r.at(t, &[0.2, 0.9]).eigenvalues();
            assert!((lo - 0.5).abs() < 1e-13 && (hi - 3.0).abs() < 1e-13);
            assert!(probe_ellipticity(&r, t, 0, &[0.2, 0.9]).is_ok());
        }
    }

    #[test]
    fn understated_constant_is_rejected() {
        let c = ConstantCoefficient {
            a: SymTensor::scalar(3.0),
            lambda: 2.0,
        };
        assert!(matches!(
            probe_ellipticity(&c, 0.0, 7, &[0.5]),
            Err(Error::EllipticityViolated { node: 7, .. })
        ));
    }
}
