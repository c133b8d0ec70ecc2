//! SO(3) helpers: the hat/vee pair and the exponential/logarithm maps.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-entry tolerance for orthonormality, determinant and skew-symmetry checks.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rotations whose angle reaches this value have no reliable logarithm.
pub const LOG_ANGLE_LIMIT: f64 = std::f64::consts::PI - 1e-6;

const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric matrix `[v]×` such that `hat(v) * w == v.cross(w)`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0, -v.z, v.y,
        v.z, 0.0, -v.x,
        -v.y, v.x, 0.0,
    );
    m
}

/// Inverse of [`hat`]. Rejects matrices that are not skew-symmetric within
/// [`ORTHONORMAL_TOL`].
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let asym = m + m.transpose();
    if asym
        .iter()
        .any(|x| !x.is_finite() || x.abs() > ORTHONORMAL_TOL)
    {
        return Err(Error::InvalidInput(format!(
            "matrix is not skew-symmetric (max |M + M^T| = {:e})",
            asym.amax()
        )));
    }
    Ok(vee_unchecked(m))
}

#[inline]
pub(crate) fn vee_unchecked(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix3<f64>", into = "Matrix3<f64>")]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps `m` after checking `m^T m = I` and `det m = +1` entrywise within
    /// [`ORTHONORMAL_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = m.transpose() * m - Matrix3::identity();
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "rotation has non-finite entries".into(),
            ));
        }
        if defect.amax() > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthonormal (max |R^T R - I| = {:e})",
                defect.amax()
            )));
        }
        if (m.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation determinant {} != 1",
                m.determinant()
            )));
        }
        Ok(Rotation(m))
    }

    /// Nearest rotation to `m` in the Frobenius sense (polar factor).
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Rotation(r)
    }

    /// Rotation by `angle` radians about the global z axis.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        #[rustfmt::skip]
        let m = Matrix3::new(
            c, -s, 0.0,
            s, c, 0.0,
            0.0, 0.0, 1.0,
        );
        Rotation(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Largest entry of `|R^T R - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl TryFrom<Matrix3<f64>> for Rotation {
    type Error = Error;

    fn try_from(m: Matrix3<f64>) -> Result<Self> {
        Rotation::from_matrix(m)
    }
}

impl From<Rotation> for Matrix3<f64> {
    fn from(r: Rotation) -> Self {
        r.0
    }
}

/// Rodrigues' formula: the rotation by `|w|` radians about `w / |w|`.
pub fn rot_exp(w: &Vector3<f64>) -> Rotation {
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let k = hat(w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Axis-angle vector of `r`. Fails once the angle reaches [`LOG_ANGLE_LIMIT`],
/// where the axis stops being well defined.
pub fn rot_log(r: &Rotation) -> Result<Vector3<f64>> {
    let m = r.matrix();
    let v = vee_unchecked(m);
    let sin_theta = v.norm();
    let cos_theta = 0.5 * (m.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta >= LOG_ANGLE_LIMIT {
        return Err(Error::DegenerateRotation { angle: theta });
    }
    if theta < SMALL_ANGLE {
        // theta / sin(theta) ~ 1 + theta^2 / 6
        return Ok(v * (1.0 + theta * theta / 6.0));
    }
    Ok(v * (theta / sin_theta))
}
