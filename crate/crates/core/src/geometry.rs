//! Rotation algebra and the manifold primitives used by the planner.
//!
//! Rotations are stored as unit quaternions `(w, x, y, z)` on S³, which
//! double-covers SO(3): `q` and `-q` produce the same rotation matrix. The
//! optimizer works on ℝ³ × S³ and uses the flattened rotation matrix only as
//! network input, so the quaternion-to-matrix Jacobian connects the two.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted deviation of `|q|` from one before a quaternion is rejected.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Below this rotation angle `so3_exp` switches to its series expansion.
const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion that is already (approximately) unit norm.
    ///
    /// Inputs whose norm is off by more than [`UNIT_TOLERANCE`] are rejected;
    /// accepted inputs are renormalized.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitQuaternion(n));
        }
        Ok(Self { w: w / n, x: x / n, y: y / n, z: z / n })
    }

    /// Normalizes an arbitrary non-zero 4-vector onto S³.
    pub fn normalize(v: Vector4<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::DegenerateStep(n));
        }
        Ok(Self::from_vector_unchecked(v / n))
    }

    pub(crate) fn from_vector_unchecked(v: Vector4<f64>) -> Self {
        Self { w: v[0], x: v[1], y: v[2], z: v[3] }
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-15 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self { w: c, x: s * a[0], y: s * a[1], z: s * a[2] }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn neg(&self) -> Self {
        Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self ⊗ rhs` (apply `rhs` first, then `self`).
    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (self, rhs);
        Self {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Angle of the relative rotation between `self` and `other`, in radians.
    /// Invariant under sign flips of either argument.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        2.0 * self.dot(other).abs().min(1.0).acos()
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        quat_to_rotmat_unchecked(self)
    }
}

/// Proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major flattening, the layout fed to the networks.
    pub fn flatten(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    pub fn column(&self, j: usize) -> Vector3<f64> {
        self.0.column(j).into_owned()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Largest entry of `|RᵀR - I|` and `|det R - 1|`.
    pub fn orthogonality_error(&self) -> f64 {
        let e = (self.0.transpose() * self.0 - Matrix3::identity()).abs().max();
        e.max((self.0.determinant() - 1.0).abs())
    }
}

/// Tangent vector on ℝ³ × S³ at some base point `(x, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TangentVector {
    pub dx: Vector3<f64>,
    pub dq: Vector4<f64>,
}

impl TangentVector {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(dx: Vector3<f64>, dq: Vector4<f64>) -> Self {
        Self { dx, dq }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.dx.dot(&other.dx) + self.dq.dot(&other.dq)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dx: self.dx * s, dq: self.dq * s }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { dx: self.dx + other.dx, dq: self.dq + other.dq }
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }

    /// Projects the quaternion component onto the tangent space at `q`.
    pub fn projected(&self, q: &UnitQuaternion) -> Self {
        Self { dx: self.dx, dq: project_sphere_tangent(q, &self.dq) }
    }
}

fn check_unit(q: &UnitQuaternion) -> Result<()> {
    let n = q.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitQuaternion(n));
    }
    Ok(())
}

/// Converts a unit quaternion to its rotation matrix.
///
/// Uses the homogeneous quadratic form, so every entry is a sum of products of
/// two components and `q`, `-q` give bitwise-identical matrices.
pub fn quat_to_rotmat(q: &UnitQuaternion) -> Result<RotationMatrix> {
    check_unit(q)?;
    Ok(quat_to_rotmat_unchecked(q))
}

fn quat_to_rotmat_unchecked(q: &UnitQuaternion) -> RotationMatrix {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let (ww, xx, yy, zz) = (w * w, x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    RotationMatrix(Matrix3::new(
        ww + xx - yy - zz,
        2.0 * (xy - wz),
        2.0 * (xz + wy),
        2.0 * (xy + wz),
        ww - xx + yy - zz,
        2.0 * (yz - wx),
        2.0 * (xz - wy),
        2.0 * (yz + wx),
        ww - xx - yy + zz,
    ))
}

/// Jacobian `∂vec(R)/∂q` of the homogeneous quaternion-to-matrix map, with
/// `vec` in row-major order and columns ordered `(w, x, y, z)`.
pub fn rotmat_jacobian(q: &UnitQuaternion) -> SMatrix<f64, 9, 4> {
    let (w, x, y, z) = (2.0 * q.w, 2.0 * q.x, 2.0 * q.y, 2.0 * q.z);
    SMatrix::<f64, 9, 4>::from_row_slice(&[
        w, x, -y, -z, //
        -z, y, x, -w, //
        y, z, w, x, //
        z, y, x, w, //
        w, -x, y, -z, //
        -x, -w, z, y, //
        -y, z, -w, x, //
        x, w, z, y, //
        w, -x, -y, z,
    ])
}

/// Pulls a gradient with respect to the row-major flattened rotation matrix
/// back to the ambient quaternion coordinates.
pub fn pullback_rotmat_grad(q: &UnitQuaternion, grad_vec_r: &[f64; 9]) -> Vector4<f64> {
    let g = SMatrix::<f64, 9, 1>::from_column_slice(grad_vec_r);
    rotmat_jacobian(q).transpose() * g
}

pub fn skew(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a - a.transpose()) * 0.5
}

/// Orthogonal projection of an ambient 3×3 gradient onto `T_ξ SO(3)`.
pub fn project_so3_tangent(xi: &RotationMatrix, g: &Matrix3<f64>) -> Matrix3<f64> {
    xi.0 * skew(&(xi.0.transpose() * g))
}

pub fn project_sphere_tangent(q: &UnitQuaternion, v: &Vector4<f64>) -> Vector4<f64> {
    let qv = q.as_vector();
    v - qv * qv.dot(v)
}

/// Retraction on S³: step in the ambient space, then renormalize.
pub fn retract_sphere(q: &UnitQuaternion, v: &Vector4<f64>) -> Result<UnitQuaternion> {
    let p = q.as_vector() + v;
    let n = p.norm();
    if !n.is_finite() || n < 1e-12 {
        return Err(Error::DegenerateStep(n));
    }
    Ok(UnitQuaternion::from_vector_unchecked(p / n))
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Exponential map from the axis-angle vector `eta` to SO(3) (Rodrigues).
pub fn so3_exp(eta: &Vector3<f64>) -> RotationMatrix {
    let theta = eta.norm();
    let k = hat(eta);
    let k2 = k * k;
    let (a, b) =
        if theta < SMALL_ANGLE { (1.0, 0.5) } else { (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta)) };
    RotationMatrix(Matrix3::identity() + k * a + k2 * b)
}

/// Matrix logarithm for rotations with angle below π.
pub fn so3_log(r: &RotationMatrix) -> Vector3<f64> {
    let m = &r.0;
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let v = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    if theta < 1e-10 {
        return v * 0.5;
    }
    v * (theta / (2.0 * theta.sin()))
}
