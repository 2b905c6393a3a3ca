use handmap_core::embodiment::{
    embody_finger, embody_frame, embody_pose, embody_trajectory, robot_markers, EmbodimentConfig,
};
use handmap_core::hand_model::{hand_markers, FingerId, HandShape, HandState, FINGER_DOF};
use handmap_core::robot_hands::finger_marker_points;
use handmap_core::se3::{Transform, Vec3};
use handmap_core::shipped;
use handmap_core::synth::{random_finger_q, random_rotation, random_state};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setups() -> Vec<(&'static str, EmbodimentConfig)> {
    ["mia", "shadow", "robotiq_2f140", "clone"]
        .into_iter()
        .map(|id| (id, shipped::embodiment(id).unwrap()))
        .collect()
}

fn within_limits(config: &EmbodimentConfig, commands: &[f64]) -> bool {
    config.hand.actuators().iter().zip(commands).all(|(a, &c)| match a.fixed {
        Some(v) => c == v,
        None => a.bounds[0] <= c && c <= a.bounds[1],
    })
}

#[test]
fn pose_placement_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut config = shipped::embodiment("mia").unwrap();
    let model = Transform::new(random_rotation(&mut rng), Vec3::new(0.2, 0.1, -0.3));
    let t = config.t_robot_model;
    let (dt, dr) = embody_pose(&Transform::identity(), &config).distance(&t.invert());
    assert!(dt < 1e-15 && dr < 1e-15);
    let (dt, dr) = embody_pose(&model, &config).compose(&t).distance(&model);
    assert!(dt < 1e-12 && dr < 1e-12);
    config.t_robot_model = Transform::identity();
    assert_eq!(embody_pose(&model, &config), model);
}

#[test]
fn reachable_robot_targets_are_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (id, config) in setups() {
        let hand = &*config.hand;
        for (&f, finger) in hand.fingers() {
            let r: Vec<f64> = finger
                .commands
                .iter()
                .map(|&i| {
                    let b = hand.actuators()[i].bounds;
                    rng.random_range(b[0]..=b[1])
                })
                .collect();
            let (p1, p2) = finger_marker_points(hand, f, &r).unwrap();
            let out = embody_finger(&[p1, p2], f, &config, &r).unwrap();
            assert_eq!(out.r, r, "{id} {f}");
            assert_eq!(out.residual, 0.0);
        }
    }
}

#[test]
fn target_beyond_reach_extends_the_finger() {
    let config = shipped::embodiment("clone").unwrap();
    let shape = shipped::hand_shape();
    for f in FingerId::ALL {
        let g = shape.geometry(f);
        let dir = g.base.rotation.column(1).into_owned();
        let (mid, tip) = handmap_core::hand_model::finger_forward_kinematics(&shape, f, &[0.0; FINGER_DOF]);
        let reach = (tip - g.base.translation).norm();
        let target = g.base.translation + dir * (reach + 0.05);
        let mut warm = [0.0; FINGER_DOF];
        warm[0] = 0.3;
        warm[3] = 0.4;
        let out = embody_finger(&[mid, target], f, &config, &warm).unwrap();
        assert!((out.residual - 0.05).abs() < 1e-3, "{f}: {}", out.residual);
        for k in 0..3 {
            assert!(out.r[3 * k].abs() < 0.05, "{f}: flexion {} stays bent", out.r[3 * k]);
        }
    }
}

fn model_markers_in_robot_frame(state: &HandState, shape: &HandShape, config: &EmbodimentConfig) -> [[Vec3; 2]; 5] {
    let base = embody_pose(&state.pose, config).invert();
    hand_markers(shape, state).map(|m| m.map(|p| base.transform_point(&p)))
}

fn worst_marker_distance(commands: &[handmap_core::embodiment::RobotCommand], states: &[(f64, HandState)]) -> f64 {
    let shape = shipped::hand_shape();
    let config = shipped::embodiment("clone").unwrap();
    let mut worst: f64 = 0.0;
    for (cmd, (_, state)) in commands.iter().zip(states) {
        let robot = robot_markers(&config.hand, &cmd.commands);
        let model = model_markers_in_robot_frame(state, &shape, &config);
        for f in FingerId::ALL {
            for k in 0..2 {
                worst = worst.max((robot[&f][k] - model[f.index()][k]).norm());
            }
        }
    }
    worst
}

#[test]
fn self_embodiment_reproduces_every_recorded_marker() {
    let record = shipped::record_config();
    let shape = &record.shape;
    let config = shipped::embodiment("clone").unwrap();
    let truth = handmap_core::synth::smooth_motion(shape, 100, 100.0, 3);
    let seq = handmap_core::synth::marker_sequence(&truth, shape, &record.t_hand_model, 100.0);
    let recorded = handmap_core::record::record_sequence(&seq, &record).unwrap();
    let states: Vec<(f64, HandState)> = recorded.frames.iter().map(|r| (r.timestamp, r.state)).collect();
    let out = embody_trajectory(&states, shape, &config).unwrap();
    let worst = worst_marker_distance(&out.commands, &states);
    println!("worst marker distance: {worst:.3e} m");
    assert!(worst < 1e-4);
}

#[test]
fn self_embodiment_from_cold_starts_rarely_misses() {
    // Without a warm start the 9-DOF fit occasionally ends in a local
    // minimum near the joint bounds even after the restarts.
    let shape = shipped::hand_shape();
    let config = shipped::embodiment("clone").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut residuals = Vec::new();
    for _ in 0..200 {
        let state = random_state(&shape, &mut rng);
        let cmd = embody_frame(0.0, &state, &shape, &config, None).unwrap();
        residuals.extend(cmd.residuals.values().copied());
    }
    residuals.sort_by(f64::total_cmp);
    let misses = residuals.iter().filter(|r| **r >= 1e-4).count();
    println!("median {:.3e} m, max {:.3e} m, {misses} of {} fingers at or above 1e-4 m", residuals[500], residuals[999], residuals.len());
    assert!(residuals[500] < 1e-6);
    assert!(misses * 100 <= residuals.len());
}

#[test]
fn jointly_driven_fingers_embody_worse_than_the_index() {
    let shape = shipped::hand_shape();
    let config = shipped::embodiment("mia").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let mut state = random_state(&shape, &mut rng);
        state.finger_q = [[0.0; FINGER_DOF]; 5];
        let base: f64 = rng.random_range(0.1..0.7);
        state.finger_q[FingerId::Index.index()][0] = rng.random_range(0.1..1.2);
        state.finger_q[FingerId::Middle.index()][0] = base;
        state.finger_q[FingerId::Ring.index()][0] = base + 0.5;
        state.finger_q[FingerId::Little.index()][0] = base + 1.0;
        let cmd = embody_frame(0.0, &state, &shape, &config, None).unwrap();
        assert!(within_limits(&config, &cmd.commands));
        let index = cmd.residuals[&FingerId::Index];
        for f in [FingerId::Middle, FingerId::Ring, FingerId::Little] {
            assert!(cmd.residuals[&f] > index, "{f}: {} <= index {index}", cmd.residuals[&f]);
        }
    }
}

#[test]
fn commands_respect_limits_and_residuals_are_honest() {
    let shape = shipped::hand_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (id, config) in setups() {
        for _ in 0..20 {
            let state = random_state(&shape, &mut rng);
            let cmd = embody_frame(0.0, &state, &shape, &config, None).unwrap();
            assert!(within_limits(&config, &cmd.commands), "{id}");
            let model = model_markers_in_robot_frame(&state, &shape, &config);
            let robot = robot_markers(&config.hand, &cmd.commands);
            for (f, r) in &cmd.residuals {
                let recomputed = robot[f]
                    .iter()
                    .zip(&model[f.index()])
                    .map(|(a, b)| (a - b).norm_squared())
                    .sum::<f64>()
                    .sqrt();
                assert!((recomputed - r).abs() < 1e-12, "{id} {f}");
                assert!(*r >= 0.0);
            }
        }
    }
}

#[test]
fn moving_the_hand_moves_only_the_base() {
    let shape = shipped::hand_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (id, config) in setups() {
        for _ in 0..10 {
            let state = random_state(&shape, &mut rng);
            let t = Transform::new(random_rotation(&mut rng), Vec3::new(0.3, -0.2, 0.5));
            let moved = HandState {
                pose: t.compose(&state.pose),
                ..state
            };
            let a = embody_frame(0.0, &state, &shape, &config, None).unwrap();
            let b = embody_frame(0.0, &moved, &shape, &config, None).unwrap();
            let (dt, dr) = b.base_pose.distance(&t.compose(&a.base_pose));
            assert!(dt < 1e-12 && dr < 1e-12);
            for (x, y) in a.commands.iter().zip(&b.commands) {
                assert!((x - y).abs() < 1e-6, "{id}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn identical_state_with_warm_start_is_a_fixed_point() {
    let shape = shipped::hand_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (id, config) in setups() {
        let state = random_state(&shape, &mut rng);
        let first = embody_frame(0.0, &state, &shape, &config, None).unwrap();
        let second = embody_frame(0.01, &state, &shape, &config, Some(&first)).unwrap();
        assert_eq!(first.commands, second.commands, "{id}");
    }
}

#[test]
fn trajectories_keep_length_and_constant_input_stays_constant() {
    let shape = shipped::hand_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = shipped::embodiment("shadow").unwrap();
    let state = HandState {
        pose: Transform::identity(),
        finger_q: random_finger_q(&shape, &mut rng, 0.1),
    };
    let states: Vec<(f64, HandState)> = (0..12).map(|i| (i as f64 * 0.01, state)).collect();
    let out = embody_trajectory(&states, &shape, &config).unwrap();
    assert_eq!(out.commands.len(), 12);
    assert_eq!(out.durations.len(), 12);
    for w in out.commands[1..].windows(2) {
        assert_eq!(w[0].commands, w[1].commands);
    }
    assert!(embody_trajectory(&[], &shape, &config).is_err());
    let backwards = vec![(0.1, state), (0.0, state)];
    assert!(embody_trajectory(&backwards, &shape, &config).is_err());
}

#[test]
fn embodiment_is_deterministic() {
    let shape = shipped::hand_shape();
    let states = handmap_core::synth::smooth_motion(&shape, 30, 100.0, 9);
    for (id, config) in setups() {
        let a = embody_trajectory(&states, &shape, &config).unwrap().commands;
        let b = embody_trajectory(&states, &shape, &config).unwrap().commands;
        assert_eq!(a, b, "{id}");
    }
}
