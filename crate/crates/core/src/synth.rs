//! Synthetic glove recordings: hand-model states turned into the marker
//! positions a motion-capture system would report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hand_model::{hand_markers, FingerId, HandShape, HandState, FINGER_DOF};
use crate::mocap::{MarkerFrame, MarkerLabel, MarkerSequence};
use crate::se3::{Mat3, Transform, Vec3};

/// Hand markers in the glove frame, centered on their centroid. The frame
/// estimated from these positions is the identity.
pub fn glove_layout() -> [(MarkerLabel, Vec3); 3] {
    let right = Vec3::new(0.03, 0.0, -0.02);
    let front = Vec3::new(0.03, 0.0, 0.04);
    let left = Vec3::new(-0.03, 0.0, -0.02);
    let c = (right + front + left) / 3.0;
    [
        (MarkerLabel::HandRight, right - c),
        (MarkerLabel::HandFront, front - c),
        (MarkerLabel::HandLeft, left - c),
    ]
}

/// Marker frame observed for `state`, given the glove → model transform.
pub fn markers_from_state(timestamp: f64, state: &HandState, shape: &HandShape, t_hand_model: &Transform) -> MarkerFrame {
    let mut frame = MarkerFrame::empty(timestamp);
    let glove = state.pose.compose(&t_hand_model.invert());
    for (label, p) in glove_layout() {
        frame.set(label, Some(glove.transform_point(&p)));
    }
    let markers = hand_markers(shape, state);
    for f in FingerId::ALL {
        let [p1, p2] = markers[f.index()];
        frame.set(MarkerLabel::Mid(f), Some(p1));
        frame.set(MarkerLabel::Tip(f), Some(p2));
    }
    frame
}

/// Uniformly distributed rotation.
pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = [b * (tau * u3).cos(), a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin()];
    Transform::from_quaternion(q, Vec3::zeros()).rotation
}

/// Finger angles drawn uniformly inside the shape's bounds, shrunk toward
/// the middle by `margin` (0 = full range).
pub fn random_finger_q(shape: &HandShape, rng: &mut impl Rng, margin: f64) -> [[f64; FINGER_DOF]; 5] {
    FingerId::ALL.map(|f| {
        let (lo, hi) = shape.bounds(f);
        std::array::from_fn(|k| {
            let span = hi[k] - lo[k];
            lo[k] + span * (margin + (1.0 - 2.0 * margin) * rng.random::<f64>())
        })
    })
}

/// Random in-bounds state with a random pose within 0.5 m of the origin.
pub fn random_state(shape: &HandShape, rng: &mut impl Rng) -> HandState {
    let translation = Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5));
    HandState {
        pose: Transform::new(random_rotation(rng), translation),
        finger_q: random_finger_q(shape, rng, 0.0),
    }
}

/// Smooth random motion sampled at `rate` Hz: every angle oscillates inside
/// its bounds and the wrist drifts and turns slowly.
pub fn smooth_motion(shape: &HandShape, frames: usize, rate: f64, seed: u64) -> Vec<(f64, HandState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let waves: Vec<[(f64, f64, f64, f64); FINGER_DOF]> = FingerId::ALL
        .iter()
        .map(|&f| {
            let (lo, hi) = shape.bounds(f);
            std::array::from_fn(|k| {
                let mid = 0.5 * (lo[k] + hi[k]);
                let amp = 0.45 * (hi[k] - lo[k]) * rng.random_range(0.3..1.0);
                (mid, amp, rng.random_range(0.1..0.8), rng.random_range(0.0..tau))
            })
        })
        .collect();
    let base = random_rotation(&mut rng);
    let drift: [(f64, f64); 6] = std::array::from_fn(|_| (rng.random_range(0.05..0.3), rng.random_range(0.0..tau)));
    (0..frames)
        .map(|i| {
            let t = i as f64 / rate;
            let finger_q = std::array::from_fn(|fi| {
                std::array::from_fn(|k| {
                    let (mid, amp, freq, phase) = waves[fi][k];
                    mid + amp * (tau * freq * t + phase).sin()
                })
            });
            let w = |j: usize| (tau * drift[j].0 * t + drift[j].1).sin();
            let rv = Vec3::new(0.4 * w(0), 0.4 * w(1), 0.4 * w(2));
            let pose = Transform::new(
                base * Transform::from_rotation_vector(&rv).rotation,
                Vec3::new(0.1 * w(3), 0.1 * w(4), 1.0 + 0.1 * w(5)),
            );
            (t, HandState { pose, finger_q })
        })
        .collect()
}

/// Marker sequence for a list of timed states.
pub fn marker_sequence(states: &[(f64, HandState)], shape: &HandShape, t_hand_model: &Transform, rate: f64) -> MarkerSequence {
    MarkerSequence {
        frames: states
            .iter()
            .map(|(t, s)| markers_from_state(*t, s, shape, t_hand_model))
            .collect(),
        nominal_rate: rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::estimate_hand_frame;
    use crate::record::estimate_model_pose;
    use crate::shipped;

    #[test]
    fn layout_gives_identity_frame() {
        let mut frame = MarkerFrame::empty(0.0);
        for (l, p) in glove_layout() {
            frame.set(l, Some(p));
        }
        let t = estimate_hand_frame(&frame).unwrap();
        let (dt, da) = t.distance(&Transform::identity());
        assert!(dt < 1e-15 && da < 1e-12);
    }

    #[test]
    fn pose_is_recovered() {
        let config = shipped::record_config();
        let shape = shipped::hand_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = random_state(&shape, &mut rng);
            let frame = markers_from_state(0.0, &s, &shape, &config.t_hand_model);
            let (dt, da) = estimate_model_pose(&frame, &config).unwrap().distance(&s.pose);
            assert!(dt < 1e-12 && da < 1e-9, "{dt} {da}");
        }
    }

    #[test]
    fn motion_stays_in_bounds() {
        let shape = shipped::hand_shape();
        let states = smooth_motion(&shape, 500, 100.0, 1);
        assert!(states.iter().all(|(_, s)| s.within_bounds(&shape)));
        assert!(states.windows(2).all(|w| w[1].0 > w[0].0));
    }
}
