use handmap_core::hand_model::FingerId;
use handmap_core::kinematics::JointValues;
use handmap_core::robot_hands::{apply_coupling, finger_marker_points, RobotHandModel};
use handmap_core::se3::Vec3;
use handmap_core::shipped;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hands() -> Vec<RobotHandModel> {
    vec![
        shipped::mia_hand(),
        shipped::shadow_hand(),
        shipped::robotiq_hand(),
        shipped::clone_hand(&shipped::hand_shape()),
    ]
}

fn random_commands(hand: &RobotHandModel, rng: &mut impl Rng) -> JointValues {
    hand.actuators()
        .iter()
        .map(|a| (a.name.clone(), rng.random_range(a.bounds[0]..=a.bounds[1])))
        .collect()
}

#[test]
fn marker_points_match_tree_forward_kinematics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for hand in hands() {
        for _ in 0..100 {
            let values = random_commands(&hand, &mut rng);
            let commands = hand.commands_from_values(&values).unwrap();
            for (&f, finger) in hand.fingers() {
                let r: Vec<f64> = finger.commands.iter().map(|&i| commands[i]).collect();
                let (p1, p2) = finger_marker_points(&hand, f, &r).unwrap();
                // other actuators keep their default commands
                let mut only = hand.default_commands();
                for &i in &finger.commands {
                    only[i] = commands[i];
                }
                let own = apply_coupling(&hand, &hand.commands_to_values(&only)).unwrap().values;
                let own_poses = hand.tree().forward_kinematics(&own).unwrap();
                for (m, p) in finger.markers.iter().zip([p1, p2]) {
                    let link = &hand.tree().links()[m.link];
                    let oracle = own_poses[link].transform_point(&m.offset);
                    assert!((p - oracle).norm() < 1e-12, "{} {f}", hand.name);
                }
            }
        }
    }
}

#[test]
fn zero_commands_put_markers_at_fixed_offsets() {
    let hand = shipped::mia_hand();
    for (&f, finger) in hand.fingers() {
        let zero = vec![0.0; finger.commands.len()];
        let (_, p2) = finger_marker_points(&hand, f, &zero).unwrap();
        let values = apply_coupling(&hand, &hand.commands_to_values(&hand.default_commands())).unwrap().values;
        let poses = hand.tree().forward_kinematics(&values).unwrap();
        let tip = &finger.markers[1];
        let expected = poses[&hand.tree().links()[tip.link]].transform_point(&tip.offset);
        assert!((p2 - expected).norm() < 1e-12);
    }
}

#[test]
fn recoupling_resolved_joints_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for hand in hands() {
        for _ in 0..200 {
            let first = apply_coupling(&hand, &random_commands(&hand, &mut rng)).unwrap();
            assert!(first.clamped.is_empty());
            let recovered = hand.commands_from_joints(&first.values).unwrap();
            let second = apply_coupling(&hand, &recovered).unwrap();
            assert!(second.clamped.is_empty(), "{}", hand.name);
            for (name, v) in first.values.iter() {
                let w = second.values.get(name).unwrap();
                assert!((v - w).abs() < 1e-12, "{} {name}: {v} vs {w}", hand.name);
            }
        }
    }
}

#[test]
fn sequential_pairs_split_exactly() {
    let shadow = shipped::shadow_hand();
    let mut cmd = shadow.commands_to_values(&shadow.default_commands());
    for (c, q2, q1) in [(1.0, 1.0, 0.0), (2.0, 1.571, 2.0 - 1.571), (1.571, 1.571, 0.0), (0.0, 0.0, 0.0)] {
        cmd.set("FFJ2", c);
        let out = apply_coupling(&shadow, &cmd).unwrap();
        assert_eq!(out.values.get("FFJ2"), Some(q2), "command {c}");
        assert_eq!(out.values.get("FFJ1"), Some(q1), "command {c}");
    }
}

#[test]
fn sequential_pairs_are_continuous_and_monotone() {
    let shadow = shipped::shadow_hand();
    let a = shadow.actuators().iter().find(|a| a.name == "MFJ2").unwrap().bounds;
    let mut cmd = shadow.commands_to_values(&shadow.default_commands());
    let mut last: Option<(f64, f64, f64)> = None;
    let steps = 10_000;
    for k in 0..=steps {
        let c = a[0] + (a[1] - a[0]) * k as f64 / steps as f64;
        cmd.set("MFJ2", c);
        let out = apply_coupling(&shadow, &cmd).unwrap();
        let (j2, j1) = (out.values.get("MFJ2").unwrap(), out.values.get("MFJ1").unwrap());
        assert!((j2 + j1 - c).abs() < 1e-12 || c < 0.0);
        if let Some((pc, p2, p1)) = last {
            assert!(j2 >= p2 && j1 >= p1);
            assert!(j2 - p2 <= c - pc + 1e-12 && j1 - p1 <= c - pc + 1e-12);
        }
        last = Some((c, j2, j1));
    }
}

#[test]
fn mirror_coupling_copies_the_motor_exactly() {
    let mia = shipped::mia_hand();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let values = random_commands(&mia, &mut rng);
        let c = values.get("mrl_flexion").unwrap();
        let out = apply_coupling(&mia, &values).unwrap().values;
        assert_eq!(out.get("ring_flexion"), Some(c));
        assert_eq!(out.get("little_flexion"), Some(c));
        assert_eq!(out.get("middle_distal_flexion"), Some(c * 0.6));
        assert_eq!(out.get("thumb_opposition"), Some(0.0));
    }
}

#[test]
fn marker_points_are_lipschitz_in_the_commands() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 1e-6;
    for hand in hands() {
        for (&f, finger) in hand.fingers() {
            let reach = finger
                .markers
                .iter()
                .map(|m| {
                    let chain_len: f64 = m
                        .chain
                        .iter()
                        .map(|&j| hand.tree().joints()[j].origin.translation.norm())
                        .sum();
                    chain_len + m.offset.norm()
                })
                .fold(0.0, f64::max);
            for _ in 0..50 {
                let r: Vec<f64> = finger
                    .commands
                    .iter()
                    .map(|&i| {
                        let b = hand.actuators()[i].bounds;
                        rng.random_range(b[0]..=b[1] - eps)
                    })
                    .collect();
                let (p1, p2) = finger_marker_points(&hand, f, &r).unwrap();
                for k in 0..r.len() {
                    let mut moved = r.clone();
                    moved[k] += eps;
                    let (m1, m2) = finger_marker_points(&hand, f, &moved).unwrap();
                    // a coupled joint moves at most twice per command unit
                    let bound = 2.0 * reach * eps * 1.0001;
                    assert!((m1 - p1).norm() <= bound && (m2 - p2).norm() <= bound, "{} {f}", hand.name);
                }
            }
        }
    }
}

#[test]
fn clone_markers_match_the_hand_model() {
    let shape = shipped::hand_shape();
    let clone = shipped::clone_hand(&shape);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let q = handmap_core::synth::random_finger_q(&shape, &mut rng, 0.0);
        for f in FingerId::ALL {
            let (m1, m2) = handmap_core::hand_model::finger_forward_kinematics(&shape, f, &q[f.index()]);
            let (r1, r2) = finger_marker_points(&clone, f, &q[f.index()]).unwrap();
            assert!((m1 - r1).norm() < 1e-12 && (m2 - r2).norm() < 1e-12);
        }
    }
}

#[test]
fn robotiq_maps_two_fingers() {
    let robotiq = shipped::robotiq_hand();
    assert_eq!(robotiq.fingers().len(), 2);
    assert_eq!(robotiq.free_actuators().count(), 1);
    let (p1, p2) = finger_marker_points(&robotiq, *robotiq.fingers().keys().next().unwrap(), &[0.0]).unwrap();
    assert!(p1 != Vec3::zeros() && p2 != Vec3::zeros());
}
