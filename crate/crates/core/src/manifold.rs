//! Complex sphere `{z : ||z||^2 = P}` with the real inner product
//! `<a, b> = Re{a^H b}`.

use num_complex::Complex64;

use crate::error::{IsacError, Result};

/// `Re{a^H b}` without a length check.
#[inline]
pub(crate) fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    re_dot(a, a).sqrt()
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(IsacError::dim(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

pub fn real_inner(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(re_dot(a, b))
}

/// A point on the sphere of squared radius `power`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint {
    z: Vec<Complex64>,
    power: f64,
}

impl SpherePoint {
    /// Wraps `z`, which must already satisfy `||z||^2 = power` to 1e-9 relative.
    pub fn new(z: Vec<Complex64>, power: f64) -> Result<Self> {
        if !(power > 0.0 && power.is_finite()) {
            return Err(IsacError::param(format!("sphere power must be positive, got {power}")));
        }
        let n2 = re_dot(&z, &z);
        if (n2 - power).abs() > 1e-9 * power {
            return Err(IsacError::param(format!("||z||^2 = {n2} is off the sphere of power {power}")));
        }
        Ok(SpherePoint { z, power })
    }

    /// Rescales a nonzero `z` onto the sphere.
    pub fn normalize(mut z: Vec<Complex64>, power: f64) -> Result<Self> {
        let n = norm(&z);
        if !(n > 0.0 && n.is_finite()) {
            return Err(IsacError::DegenerateRetraction);
        }
        let s = power.sqrt() / n;
        z.iter_mut().for_each(|c| *c *= s);
        Ok(SpherePoint { z, power })
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.z
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.z
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    /// `| ||z||^2 - P | / P`.
    pub fn power_residual(&self) -> f64 {
        (re_dot(&self.z, &self.z) - self.power).abs() / self.power
    }
}

/// Tangent vector at some base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector(pub Vec<Complex64>);

impl TangentVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// `|Re{z^H eta}| / (||z|| ||eta||)`, zero for a zero vector.
    pub fn tangency_residual(&self, point: &SpherePoint) -> f64 {
        let n = self.norm() * norm(point.as_slice());
        if n == 0.0 {
            0.0
        } else {
            re_dot(point.as_slice(), &self.0).abs() / n
        }
    }
}

/// `d - (<z, d> / P) z`.
pub fn project_tangent(point: &SpherePoint, d: &[Complex64]) -> Result<TangentVector> {
    check_len(point.z.len(), d.len())?;
    debug_assert!(point.power_residual() < 1e-9);
    let s = re_dot(&point.z, d) / point.power;
    Ok(TangentVector(d.iter().zip(&point.z).map(|(dv, zv)| dv - zv * s).collect()))
}

/// Projection of the Euclidean (conjugate-Wirtinger) gradient.
pub fn riemannian_grad(point: &SpherePoint, euclidean_grad: &[Complex64]) -> Result<TangentVector> {
    project_tangent(point, euclidean_grad)
}

/// `sqrt(P) (z + step * dir) / ||z + step * dir||`.
pub fn retract(point: &SpherePoint, step: f64, direction: &[Complex64]) -> Result<SpherePoint> {
    check_len(point.z.len(), direction.len())?;
    if step == 0.0 {
        return Ok(point.clone());
    }
    let moved: Vec<Complex64> = point.z.iter().zip(direction).map(|(z, d)| z + d * step).collect();
    SpherePoint::normalize(moved, point.power)
}
