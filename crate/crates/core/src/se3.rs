//! Rigid-body transforms.
//!
//! Rotations are stored as orthonormal matrices. Composition follows the
//! active convention: `a.compose(&b)` maps a point through `b` first, then `a`,
//! so `T_world_model = T_world_hand.compose(&T_hand_model)`.

use std::ops::Mul;

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Minimum angle between the two input vectors of [`frame_from_two_vectors`].
pub const PARALLEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("degenerate frame: {0}")]
    DegenerateFrame(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        Self::from_rotation(axis_angle_matrix(axis, angle))
    }

    /// Rotation vector (axis times angle) as used by the explorer's global
    /// orientation sliders.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            return Self::identity();
        }
        Self::from_axis_angle(&(v / angle), angle)
    }

    /// Fixed-axis roll/pitch/yaw: `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(rpy: [f64; 3], xyz: [f64; 3]) -> Self {
        let r = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
        Self::new(*r.matrix(), Vec3::from(xyz))
    }

    /// Builds a transform from a quaternion given as `[w, x, y, z]`. The
    /// quaternion is normalized first.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vec3) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]));
        Self::new(*q.to_rotation_matrix().matrix(), translation)
    }

    /// Rotation as a unit quaternion `[w, x, y, z]` with non-negative `w`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let q = q.into_inner();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    /// Rotation vector (axis times angle in `[0, pi]`).
    pub fn rotation_vector(&self) -> Vec3 {
        Rotation3::from_matrix_unchecked(self.rotation).scaled_axis()
    }

    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Largest entry of `RᵀR - I` in absolute value.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).amax()
    }

    /// Orthonormal with determinant +1, within `tol` per entry.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.rotation.iter().all(|x| x.is_finite())
            && self.translation.iter().all(|x| x.is_finite())
            && self.orthonormality_error() <= tol
            && (self.rotation.determinant() - 1.0).abs() <= 3.0 * tol
    }

    /// Translation distance and rotation angle between two transforms.
    pub fn distance(&self, other: &Transform) -> (f64, f64) {
        let dt = (self.translation - other.translation).norm();
        let rel = self.rotation.transpose() * other.rotation;
        // acos is badly conditioned near zero; use the skew part as well.
        let sin_part = Vec3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm()
            * 0.5;
        let cos_part = (rel.trace() - 1.0) * 0.5;
        (dt, sin_part.atan2(cos_part))
    }
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

impl Mul<&Transform> for &Transform {
    type Output = Transform;

    fn mul(self, rhs: &Transform) -> Transform {
        self.compose(rhs)
    }
}

/// Rodrigues rotation matrix.
pub fn axis_angle_matrix(axis: &Vec3, angle: f64) -> Mat3 {
    let axis = Unit::new_normalize(*axis);
    *Rotation3::from_axis_angle(&axis, angle).matrix()
}

/// Two-vector frame construction.
///
/// Rotation columns are `[n, o, a]` with `a = approach / |approach|`,
/// `o` the orientation vector made orthogonal to `a`, and `n = o × a`.
pub fn frame_from_two_vectors(
    approach: &Vec3,
    orientation: &Vec3,
    origin: &Vec3,
) -> Result<Transform, FrameError> {
    let an = approach.norm();
    let on = orientation.norm();
    if !(an > 0.0 && an.is_finite()) || !(on > 0.0 && on.is_finite()) {
        return Err(FrameError::DegenerateFrame("zero-length input vector"));
    }
    let a = approach / an;
    let o_unit = orientation / on;
    let sin_angle = a.cross(&o_unit).norm();
    if sin_angle.asin() < PARALLEL_TOLERANCE {
        return Err(FrameError::DegenerateFrame("approach and orientation are parallel"));
    }
    let o = (o_unit - a * o_unit.dot(&a)).normalize();
    let n = o.cross(&a);
    Ok(Transform::new(Mat3::from_columns(&[n, o, a]), *origin))
}

/// On-disk pose: translation in meters and a unit quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub translation: [f64; 3],
    pub rotation: [f64; 4],
}

impl From<&Transform> for PoseRecord {
    fn from(t: &Transform) -> Self {
        PoseRecord {
            translation: [t.translation.x, t.translation.y, t.translation.z],
            rotation: t.quaternion(),
        }
    }
}

impl From<&PoseRecord> for Transform {
    fn from(p: &PoseRecord) -> Self {
        Transform::from_quaternion(p.rotation, Vec3::from(p.translation))
    }
}

/// Config-file pose: translation plus roll/pitch/yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Origin {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl From<&Origin> for Transform {
    fn from(o: &Origin) -> Self {
        Transform::from_rpy(o.rpy, o.xyz)
    }
}
