//! Parametric intermediate hand model.
//!
//! Each finger is a chain of three segments. Every segment starts with a
//! triplet of orthogonal revolute joints (flexion about local x, abduction
//! about local z, twist about local y), giving nine angles per finger. In the
//! finger frame y points distally and z points to the palmar side, so
//! positive flexion curls the finger toward the palm.
//!
//! Segment geometry (base offset, lengths, radii) is affine in the ten shape
//! coefficients `beta`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Capsule, MeshError, TriangleMesh};
use crate::se3::{Mat3, Transform, Vec3};

pub const SHAPE_DIM: usize = 10;
pub const FINGER_DOF: usize = 9;
pub const SEGMENTS: usize = 3;
/// Bound on `|beta_k|` for which segment sizes must stay positive.
pub const BETA_RANGE: f64 = 3.0;

pub type FingerAngles = [f64; FINGER_DOF];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerId {
    Thumb = 1,
    Index = 2,
    Middle = 3,
    Ring = 4,
    Little = 5,
}

impl FingerId {
    pub const ALL: [FingerId; 5] = [
        FingerId::Thumb,
        FingerId::Index,
        FingerId::Middle,
        FingerId::Ring,
        FingerId::Little,
    ];

    /// Zero-based position in [`FingerId::ALL`].
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            FingerId::Thumb => "thumb",
            FingerId::Index => "index",
            FingerId::Middle => "middle",
            FingerId::Ring => "ring",
            FingerId::Little => "little",
        }
    }
}

impl fmt::Display for FingerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FingerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FingerId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown finger '{s}'"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("{finger}: {quantity} can become non-positive for beta in [-3, 3]^10")]
    NonPositiveGeometry { finger: FingerId, quantity: &'static str },
    #[error("{finger}: bounds must satisfy q_min <= q_max")]
    InvalidBounds { finger: FingerId },
    #[error("{finger}: marker attachment segment must be 0, 1 or 2")]
    InvalidMarker { finger: FingerId },
    #[error("expected {expected} values, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("invalid hand-shape file: {0}")]
    Parse(String),
}

/// Where a virtual marker sits on a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerAttachment {
    /// Segment index, 0 = proximal.
    pub segment: usize,
    /// Position along the segment as a fraction of its length.
    pub along: f64,
    /// Offset toward the dorsal side, in multiples of the segment radius.
    #[serde(default)]
    pub dorsal: f64,
}

/// Mean geometry plus one coefficient row per shape component.
///
/// The nine entries are `[base x, base y, base z, length 0..3, radius 0..3]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerBasis {
    pub mean: [f64; 9],
    pub coeffs: [[f64; 9]; SHAPE_DIM],
}

impl FingerBasis {
    pub fn resolve(&self, beta: &[f64; SHAPE_DIM]) -> [f64; 9] {
        let mut v = self.mean;
        for (b, row) in beta.iter().zip(&self.coeffs) {
            for (vi, c) in v.iter_mut().zip(row) {
                *vi += b * c;
            }
        }
        v
    }

    /// Smallest value entry `i` reaches over the beta box.
    fn worst_case(&self, i: usize) -> f64 {
        self.mean[i] - BETA_RANGE * self.coeffs.iter().map(|row| row[i].abs()).sum::<f64>()
    }
}

/// Per-finger configuration of the hand model.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerModel {
    /// Fixed orientation of the finger frame in the model base frame.
    pub base_rotation: Mat3,
    pub basis: FingerBasis,
    pub markers: [MarkerAttachment; 2],
    pub q_min: FingerAngles,
    pub q_max: FingerAngles,
}

/// Finger geometry for a fixed `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerGeometry {
    pub base: Transform,
    pub lengths: [f64; SEGMENTS],
    pub radii: [f64; SEGMENTS],
    pub markers: [MarkerAttachment; 2],
}

impl FingerGeometry {
    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Marker position in the frame of its segment.
    pub fn marker_local(&self, m: usize) -> Vec3 {
        let a = self.markers[m];
        Vec3::new(0.0, a.along * self.lengths[a.segment], -a.dorsal * self.radii[a.segment])
    }

    /// Frames at the start of each segment (after its joint triplet), in the
    /// model base frame.
    pub fn segment_frames(&self, q: &FingerAngles) -> [Transform; SEGMENTS] {
        let mut frames = [Transform::identity(); SEGMENTS];
        let mut rot = self.base.rotation;
        let mut pos = self.base.translation;
        for s in 0..SEGMENTS {
            if s > 0 {
                pos += rot.column(1) * self.lengths[s - 1];
            }
            rot *= triplet_rotation(q[3 * s], q[3 * s + 1], q[3 * s + 2]);
            frames[s] = Transform::new(rot, pos);
        }
        frames
    }

    /// Mid and tip virtual markers in the model base frame.
    pub fn markers(&self, q: &FingerAngles) -> [Vec3; 2] {
        let frames = self.segment_frames(q);
        [0, 1].map(|m| frames[self.markers[m].segment].transform_point(&self.marker_local(m)))
    }

    pub fn capsules(&self, q: &FingerAngles) -> [Capsule; SEGMENTS] {
        let frames = self.segment_frames(q);
        let mut out = [Capsule {
            start: Vec3::zeros(),
            end: Vec3::zeros(),
            radius: 0.0,
            palmar: Vec3::z(),
        }; SEGMENTS];
        for s in 0..SEGMENTS {
            let f = &frames[s];
            out[s] = Capsule {
                start: f.translation,
                end: f.transform_point(&Vec3::new(0.0, self.lengths[s], 0.0)),
                radius: self.radii[s],
                palmar: f.rotation.column(2).into_owned(),
            };
        }
        out
    }
}

/// `Rx(flexion) * Rz(abduction) * Ry(twist)`.
pub fn triplet_rotation(flexion: f64, abduction: f64, twist: f64) -> Mat3 {
    let (sa, ca) = flexion.sin_cos();
    let (sb, cb) = abduction.sin_cos();
    let (sc, cc) = twist.sin_cos();
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let rz = Mat3::new(cb, -sb, 0.0, sb, cb, 0.0, 0.0, 0.0, 1.0);
    let ry = Mat3::new(cc, 0.0, sc, 0.0, 1.0, 0.0, -sc, 0.0, cc);
    rx * rz * ry
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandShape {
    beta: [f64; SHAPE_DIM],
    fingers: [FingerModel; 5],
    resolved: [FingerGeometry; 5],
}

impl HandShape {
    pub fn new(beta: [f64; SHAPE_DIM], fingers: [FingerModel; 5]) -> Result<Self, ShapeError> {
        for (finger, model) in FingerId::ALL.into_iter().zip(&fingers) {
            for i in 3..6 {
                if !(model.basis.worst_case(i) > 0.0) {
                    return Err(ShapeError::NonPositiveGeometry {
                        finger,
                        quantity: "segment length",
                    });
                }
            }
            for i in 6..9 {
                if !(model.basis.worst_case(i) > 0.0) {
                    return Err(ShapeError::NonPositiveGeometry {
                        finger,
                        quantity: "segment radius",
                    });
                }
            }
            if model.q_min.iter().zip(&model.q_max).any(|(lo, hi)| !(lo <= hi)) {
                return Err(ShapeError::InvalidBounds { finger });
            }
            if model.markers.iter().any(|m| m.segment >= SEGMENTS) {
                return Err(ShapeError::InvalidMarker { finger });
            }
        }
        let resolved = std::array::from_fn(|i| {
            let m = &fingers[i];
            let v = m.basis.resolve(&beta);
            FingerGeometry {
                base: Transform::new(m.base_rotation, Vec3::new(v[0], v[1], v[2])),
                lengths: [v[3], v[4], v[5]],
                radii: [v[6], v[7], v[8]],
                markers: m.markers,
            }
        });
        Ok(HandShape {
            beta,
            fingers,
            resolved,
        })
    }

    /// Same basis, different shape coefficients.
    pub fn with_beta(&self, beta: [f64; SHAPE_DIM]) -> Result<Self, ShapeError> {
        HandShape::new(beta, self.fingers.clone())
    }

    pub fn beta(&self) -> &[f64; SHAPE_DIM] {
        &self.beta
    }

    pub fn finger(&self, finger: FingerId) -> &FingerModel {
        &self.fingers[finger.index()]
    }

    pub fn fingers(&self) -> &[FingerModel; 5] {
        &self.fingers
    }

    pub fn geometry(&self, finger: FingerId) -> &FingerGeometry {
        &self.resolved[finger.index()]
    }

    pub fn bounds(&self, finger: FingerId) -> (FingerAngles, FingerAngles) {
        let m = self.finger(finger);
        (m.q_min, m.q_max)
    }
}

/// Pose of the hand-model base in the world plus all finger angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandState {
    pub pose: Transform,
    pub finger_q: [FingerAngles; 5],
}

impl Default for HandState {
    fn default() -> Self {
        HandState {
            pose: Transform::identity(),
            finger_q: [[0.0; FINGER_DOF]; 5],
        }
    }
}

impl HandState {
    /// Builds a state from the 48 interactive parameters: a rotation vector
    /// for the global orientation and 45 finger angles (thumb first).
    pub fn from_parameters(
        global_orientation: [f64; 3],
        translation: [f64; 3],
        finger_angles: &[f64],
    ) -> Result<Self, ShapeError> {
        if finger_angles.len() != 5 * FINGER_DOF {
            return Err(ShapeError::WrongCount {
                expected: 5 * FINGER_DOF,
                got: finger_angles.len(),
            });
        }
        let mut pose = Transform::from_rotation_vector(&Vec3::from(global_orientation));
        pose.translation = Vec3::from(translation);
        let finger_q = std::array::from_fn(|f| std::array::from_fn(|k| finger_angles[f * FINGER_DOF + k]));
        Ok(HandState { pose, finger_q })
    }

    pub fn q(&self, finger: FingerId) -> &FingerAngles {
        &self.finger_q[finger.index()]
    }

    pub fn within_bounds(&self, shape: &HandShape) -> bool {
        FingerId::ALL.into_iter().all(|f| {
            let (lo, hi) = shape.bounds(f);
            self.q(f).iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| l <= v && v <= h)
        })
    }
}

/// Mid-phalanx (`p1`) and fingertip (`p2`) virtual markers in the model base
/// frame.
pub fn finger_forward_kinematics(shape: &HandShape, finger: FingerId, q: &FingerAngles) -> (Vec3, Vec3) {
    let [p1, p2] = shape.geometry(finger).markers(q);
    (p1, p2)
}

/// All ten virtual markers in the world frame, thumb first.
pub fn hand_markers(shape: &HandShape, state: &HandState) -> [[Vec3; 2]; 5] {
    FingerId::ALL.map(|f| {
        let (p1, p2) = finger_forward_kinematics(shape, f, state.q(f));
        [state.pose.transform_point(&p1), state.pose.transform_point(&p2)]
    })
}

/// Capsule surface of one finger in the model base frame. With
/// `contact_only`, only the palmar halves are returned.
pub fn finger_surface_mesh(
    shape: &HandShape,
    finger: FingerId,
    q: &FingerAngles,
    segments_per_capsule: usize,
    contact_only: bool,
) -> Result<TriangleMesh, MeshError> {
    let capsules = shape.geometry(finger).capsules(q);
    let parts = capsules
        .iter()
        .map(|c| c.mesh(segments_per_capsule, contact_only))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TriangleMesh::merged(&parts))
}

/// Angles for one finger, padded with zeros.
pub fn angles_from_slice(v: &[f64]) -> FingerAngles {
    let mut q = [0.0; FINGER_DOF];
    for (d, s) in q.iter_mut().zip(v) {
        *d = *s;
    }
    q
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::se3::axis_angle_matrix;

    pub fn simple_finger(lengths: [f64; 3], radii: [f64; 3]) -> FingerModel {
        let mut mean = [0.0; 9];
        mean[3..6].copy_from_slice(&lengths);
        mean[6..9].copy_from_slice(&radii);
        FingerModel {
            base_rotation: Mat3::identity(),
            basis: FingerBasis {
                mean,
                coeffs: [[0.0; 9]; SHAPE_DIM],
            },
            markers: [
                MarkerAttachment {
                    segment: 1,
                    along: 0.5,
                    dorsal: 1.0,
                },
                MarkerAttachment {
                    segment: 2,
                    along: 1.0,
                    dorsal: 0.0,
                },
            ],
            q_min: [-1.0; 9],
            q_max: [1.0; 9],
        }
    }

    #[test]
    fn zero_configuration_tip() {
        let shape = crate::shipped::hand_shape();
        for f in FingerId::ALL {
            let g = shape.geometry(f);
            let (_, p2) = finger_forward_kinematics(&shape, f, &[0.0; 9]);
            let expected = g.base.translation + g.base.rotation.column(1) * g.total_length();
            assert!((p2 - expected).norm() < 1e-15, "{f}");
        }
    }

    #[test]
    fn first_flexion_rotates_tip_rigidly() {
        let shape = crate::shipped::hand_shape();
        let g = shape.geometry(FingerId::Index);
        let (_, rest) = finger_forward_kinematics(&shape, FingerId::Index, &[0.0; 9]);
        let mut q = [0.0; 9];
        q[0] = std::f64::consts::FRAC_PI_2;
        let (_, bent) = finger_forward_kinematics(&shape, FingerId::Index, &q);
        let base = g.base.translation;
        assert!(((bent - base).norm() - (rest - base).norm()).abs() < 1e-15);
        let axis = g.base.rotation.column(0).into_owned();
        let expected = base + axis_angle_matrix(&axis, q[0]) * (rest - base);
        assert!((bent - expected).norm() < 1e-15);
    }

    #[test]
    fn markers_follow_pose() {
        let shape = crate::shipped::hand_shape();
        let mut state = HandState::default();
        state.finger_q[1] = [0.3, 0.1, 0.0, 0.5, 0.0, 0.1, 0.4, 0.0, 0.0];
        let local = hand_markers(&shape, &state);
        for f in FingerId::ALL {
            let (p1, p2) = finger_forward_kinematics(&shape, f, state.q(f));
            assert_eq!(local[f.index()], [p1, p2]);
        }
        let t = Vec3::new(0.1, -0.2, 0.3);
        state.pose = Transform::from_translation(t);
        let shifted = hand_markers(&shape, &state);
        for (a, b) in local.iter().flatten().zip(shifted.iter().flatten()) {
            assert!((b - a - t).norm() < 1e-15);
        }
        state.pose = Transform::from_rpy([0.4, -0.2, 1.3], [0.0; 3]);
        let rotated = hand_markers(&shape, &state);
        let pts_a: Vec<Vec3> = local.iter().flatten().copied().collect();
        let pts_b: Vec<Vec3> = rotated.iter().flatten().copied().collect();
        for i in 0..10 {
            for j in 0..10 {
                let da = (pts_a[i] - pts_a[j]).norm();
                let db = (pts_b[i] - pts_b[j]).norm();
                assert!((da - db).abs() < 1e-14);
            }
        }
    }

    fn one_segment_shape(length: f64, radius: f64) -> HandShape {
        let fingers = std::array::from_fn(|_| simple_finger([length, 0.01, 0.01], [radius, 0.005, 0.005]));
        HandShape::new([0.0; SHAPE_DIM], fingers).unwrap()
    }

    #[test]
    fn phalanx_mesh_extent() {
        let (l, r) = (0.03, 0.008);
        let shape = one_segment_shape(l, r);
        let cap = shape.geometry(FingerId::Index).capsules(&[0.0; 9])[0];
        let mesh = cap.mesh(16, false).unwrap();
        let (lo, hi) = mesh.bounding_box().unwrap();
        assert!(((hi.y - lo.y) - (l + 2.0 * r)).abs() < 1e-9);
    }

    #[test]
    fn doubling_radii_doubles_cross_section() {
        let mut finger = simple_finger([0.04, 0.03, 0.02], [0.01, 0.008, 0.006]);
        let shape = HandShape::new([0.0; SHAPE_DIM], std::array::from_fn(|_| finger.clone())).unwrap();
        for i in 6..9 {
            finger.basis.mean[i] *= 2.0;
        }
        let doubled = HandShape::new([0.0; SHAPE_DIM], std::array::from_fn(|_| finger.clone())).unwrap();
        let extent = |s: &HandShape| {
            let m = finger_surface_mesh(s, FingerId::Middle, &[0.0; 9], 16, false).unwrap();
            let (lo, hi) = m.bounding_box().unwrap();
            (hi.x - lo.x).max(hi.z - lo.z)
        };
        assert!((extent(&doubled) - 2.0 * extent(&shape)).abs() < 1e-12);
    }

    #[test]
    fn single_capsule_area() {
        let (l, r) = (0.03, 0.008);
        let shape = one_segment_shape(l, r);
        let cap = shape.geometry(FingerId::Index).capsules(&[0.0; 9])[0];
        let area = cap.mesh(32, false).unwrap().area();
        let exact = 2.0 * std::f64::consts::PI * r * l + 4.0 * std::f64::consts::PI * r * r;
        assert!((area - exact).abs() / exact < 0.02);
    }

    #[test]
    fn shape_validation() {
        let mut finger = simple_finger([0.04, 0.03, 0.02], [0.01, 0.008, 0.006]);
        finger.basis.coeffs[0][4] = 0.02; // 0.03 - 3 * 0.02 < 0
        let fingers = std::array::from_fn(|_| finger.clone());
        assert!(matches!(
            HandShape::new([0.0; SHAPE_DIM], fingers),
            Err(ShapeError::NonPositiveGeometry { .. })
        ));
        let mut finger = simple_finger([0.04, 0.03, 0.02], [0.01, 0.008, 0.006]);
        finger.q_min[3] = 2.0;
        assert!(matches!(
            HandShape::new([0.0; SHAPE_DIM], std::array::from_fn(|_| finger.clone())),
            Err(ShapeError::InvalidBounds { .. })
        ));
    }

    #[test]
    fn beta_zero_is_mean_and_lengths_are_affine() {
        let shape = crate::shipped::hand_shape();
        for f in FingerId::ALL {
            let basis = shape.finger(f).basis;
            let g = shape.geometry(f);
            assert_eq!(g.lengths, [basis.mean[3], basis.mean[4], basis.mean[5]]);
        }
        let mut beta = [0.0; SHAPE_DIM];
        beta[0] = 1.5;
        beta[2] = -0.7;
        let other = shape.with_beta(beta).unwrap();
        for f in FingerId::ALL {
            let basis = shape.finger(f).basis;
            for s in 0..3 {
                let expected = basis.mean[3 + s] + 1.5 * basis.coeffs[0][3 + s] - 0.7 * basis.coeffs[2][3 + s];
                assert!((other.geometry(f).lengths[s] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parameter_count_is_checked() {
        assert!(HandState::from_parameters([0.0; 3], [0.0; 3], &[0.0; 45]).is_ok());
        assert_eq!(
            HandState::from_parameters([0.0; 3], [0.0; 3], &[0.0; 44]),
            Err(ShapeError::WrongCount { expected: 45, got: 44 })
        );
    }
}
