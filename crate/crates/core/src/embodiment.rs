//! Embodiment mapping: hand-model state to robot base pose and actuator
//! commands.
//!
//! The robot base follows the model base through the fixed calibration
//! `t_robot_model` (pose of the model base in the robot base frame). Each
//! robot finger then solves a small inverse-kinematics problem: move its two
//! expected markers onto the model's virtual markers. Fingers that share an
//! actuator (e.g. one motor driving three fingers) are solved together, the
//! squared distances of all their markers summed.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::boxopt::{minimize, Bounds, OptimError, SolveOptions};
use crate::hand_model::{finger_forward_kinematics, FingerId, HandShape, HandState};
use crate::kinematics::JointValues;
use crate::mesh::{MeshError, TriangleMesh};
use crate::robot_hands::RobotHandModel;
use crate::se3::{Transform, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbodimentError {
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("EmptyInput: no hand states to embody")]
    EmptyInput,
    #[error("timestamps must increase (frame {0})")]
    NonMonotoneTimestamps(usize),
    #[error("robot hand has no finger '{0}'")]
    UnknownFinger(FingerId),
    #[error("expected {expected} commands, got {got}")]
    WrongCommandCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodimentConfig {
    /// Pose of the hand-model base in the robot base frame.
    pub t_robot_model: Transform,
    pub hand: Arc<RobotHandModel>,
    pub solver: SolveOptions,
}

impl EmbodimentConfig {
    pub fn new(t_robot_model: Transform, hand: Arc<RobotHandModel>, solver: SolveOptions) -> Result<Self, String> {
        if !t_robot_model.is_valid(1e-9) {
            return Err("t_robot_model is not a rigid transform".into());
        }
        Ok(EmbodimentConfig {
            t_robot_model,
            hand,
            solver,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotCommand {
    pub timestamp: f64,
    /// World pose of the robot hand base.
    pub base_pose: Transform,
    /// One value per actuator, ordered like [`RobotHandModel::actuators`].
    pub commands: Vec<f64>,
    /// Per mapped finger: `sqrt` of the summed squared marker distances.
    pub residuals: BTreeMap<FingerId, f64>,
}

impl RobotCommand {
    pub fn actuated_values(&self, hand: &RobotHandModel) -> JointValues {
        hand.commands_to_values(&self.commands)
    }
}

/// World pose of the robot base for a given model pose.
pub fn embody_pose(model_pose: &Transform, config: &EmbodimentConfig) -> Transform {
    model_pose.compose(&config.t_robot_model.invert())
}

/// Virtual markers of the model, per finger, in the robot base frame.
pub fn model_targets(state: &HandState, shape: &HandShape, config: &EmbodimentConfig) -> BTreeMap<FingerId, [Vec3; 2]> {
    config
        .hand
        .fingers()
        .keys()
        .map(|&f| {
            let (p1, p2) = finger_forward_kinematics(shape, f, state.q(f));
            (
                f,
                [
                    config.t_robot_model.transform_point(&p1),
                    config.t_robot_model.transform_point(&p2),
                ],
            )
        })
        .collect()
}

/// Objective over a subset of actuators with everything else fixed.
struct GroupProblem<'a> {
    hand: &'a RobotHandModel,
    fingers: Vec<(FingerId, [Vec3; 2])>,
    indices: &'a [usize],
    commands: Vec<f64>,
    joints: Vec<f64>,
}

impl GroupProblem<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        for (&a, &v) in self.indices.iter().zip(x) {
            self.commands[a] = v;
        }
        self.hand.resolve_into(&self.commands, &mut self.joints);
        let mut sum = 0.0;
        for (f, targets) in &self.fingers {
            let finger = &self.hand.fingers()[f];
            for (m, t) in finger.markers.iter().zip(targets) {
                sum += (t - self.hand.marker_position(m, &self.joints)).norm_squared();
            }
        }
        sum
    }
}

fn command_bounds(hand: &RobotHandModel, indices: &[usize]) -> Bounds {
    let a = hand.actuators();
    Bounds::new(
        indices.iter().map(|&i| a[i].bounds[0]).collect(),
        indices.iter().map(|&i| a[i].bounds[1]).collect(),
    )
    .expect("actuator bounds are validated")
}

/// Summed squared marker residual (m²) of a finger group above which the
/// solve is repeated from fixed points inside the command box.
pub const RESTART_RESIDUAL: f64 = 1e-8;

/// Restart points as fractions of every command's range.
const RESTART_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];

/// Optimizes `commands[indices]` in place for the given finger targets.
/// The warm start is solved first; if it leaves more than
/// [`RESTART_RESIDUAL`], the restarts run and the lowest objective wins
/// (ties keep the earlier start).
fn solve_group(
    config: &EmbodimentConfig,
    fingers: Vec<(FingerId, [Vec3; 2])>,
    indices: &[usize],
    commands: &mut [f64],
) -> Result<(), OptimError> {
    if indices.is_empty() {
        return Ok(());
    }
    let hand = &*config.hand;
    let x0: Vec<f64> = indices.iter().map(|&i| commands[i]).collect();
    let mut problem = GroupProblem {
        hand,
        fingers,
        indices,
        commands: commands.to_vec(),
        joints: vec![0.0; hand.tree().joints().len()],
    };
    let bounds = command_bounds(hand, indices);
    let mut best = minimize(|x| problem.eval(x), &x0, &bounds, &config.solver)?;
    if best.objective > RESTART_RESIDUAL {
        for frac in RESTART_FRACTIONS {
            let start: Vec<f64> = bounds
                .lower()
                .iter()
                .zip(bounds.upper())
                .map(|(lo, hi)| lo + frac * (hi - lo))
                .collect();
            let r = minimize(|x| problem.eval(x), &start, &bounds, &config.solver)?;
            if r.objective < best.objective {
                best = r;
            }
        }
    }
    for (&i, v) in indices.iter().zip(best.x) {
        commands[i] = v;
    }
    Ok(())
}

/// Residual of every mapped finger for a full command vector.
pub fn finger_residuals(
    hand: &RobotHandModel,
    commands: &[f64],
    targets: &BTreeMap<FingerId, [Vec3; 2]>,
) -> BTreeMap<FingerId, f64> {
    let joints = hand.resolve(commands);
    hand.fingers()
        .iter()
        .filter_map(|(f, finger)| {
            let t = targets.get(f)?;
            let sq: f64 = finger
                .markers
                .iter()
                .zip(t)
                .map(|(m, p)| (p - hand.marker_position(m, &joints)).norm_squared())
                .sum();
            Some((*f, sq.sqrt()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerEmbodiment {
    /// Commands of the finger, ordered like `RobotFinger::commands`.
    pub r: Vec<f64>,
    pub residual: f64,
}

/// Solves one finger on its own. Targets are in the robot base frame; other
/// actuators stay at their default commands.
pub fn embody_finger(
    targets: &[Vec3; 2],
    finger: FingerId,
    config: &EmbodimentConfig,
    warm_start: &[f64],
) -> Result<FingerEmbodiment, EmbodimentError> {
    let hand = &*config.hand;
    let f = hand.finger(finger).ok_or(EmbodimentError::UnknownFinger(finger))?;
    if warm_start.len() != f.commands.len() {
        return Err(EmbodimentError::WrongCommandCount {
            expected: f.commands.len(),
            got: warm_start.len(),
        });
    }
    if targets.iter().any(|t| !t.iter().all(|v| v.is_finite())) {
        return Err(OptimError::NonFiniteObjective { x: warm_start.to_vec() }.into());
    }
    let mut commands = hand.default_commands();
    for (&i, &v) in f.commands.iter().zip(warm_start) {
        commands[i] = v;
    }
    solve_group(config, vec![(finger, *targets)], &f.commands, &mut commands)?;
    let mut t = BTreeMap::new();
    t.insert(finger, *targets);
    let residual = finger_residuals(hand, &commands, &t)[&finger];
    Ok(FingerEmbodiment {
        r: f.commands.iter().map(|&i| commands[i]).collect(),
        residual,
    })
}

/// Maps one hand state. Warm-starts from `previous` when given.
pub fn embody_frame(
    timestamp: f64,
    state: &HandState,
    shape: &HandShape,
    config: &EmbodimentConfig,
    previous: Option<&RobotCommand>,
) -> Result<RobotCommand, EmbodimentError> {
    let hand = &*config.hand;
    let mut commands = match previous {
        Some(p) if p.commands.len() == hand.actuators().len() => p.commands.clone(),
        Some(p) => {
            return Err(EmbodimentError::WrongCommandCount {
                expected: hand.actuators().len(),
                got: p.commands.len(),
            })
        }
        None => hand.default_commands(),
    };
    for (c, a) in commands.iter_mut().zip(hand.actuators()) {
        *c = a.fixed.unwrap_or_else(|| c.clamp(a.bounds[0], a.bounds[1]));
    }
    let targets = model_targets(state, shape, config);
    for group in hand.groups() {
        let fingers = group.fingers.iter().map(|f| (*f, targets[f])).collect();
        solve_group(config, fingers, &group.commands, &mut commands)?;
    }
    let residuals = finger_residuals(hand, &commands, &targets);
    Ok(RobotCommand {
        timestamp,
        base_pose: embody_pose(&state.pose, config),
        commands,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodiedTrajectory {
    pub commands: Vec<RobotCommand>,
    /// Wall-clock seconds spent in each frame's mapping.
    pub durations: Vec<f64>,
}

/// Maps a sequence of states, chaining warm starts.
pub fn embody_trajectory(
    states: &[(f64, HandState)],
    shape: &HandShape,
    config: &EmbodimentConfig,
) -> Result<EmbodiedTrajectory, EmbodimentError> {
    if states.is_empty() {
        return Err(EmbodimentError::EmptyInput);
    }
    if let Some(i) = states.windows(2).position(|w| !(w[1].0 > w[0].0)) {
        return Err(EmbodimentError::NonMonotoneTimestamps(i + 1));
    }
    let mut commands: Vec<RobotCommand> = Vec::with_capacity(states.len());
    let mut durations = Vec::with_capacity(states.len());
    for (t, state) in states {
        let start = Instant::now();
        let cmd = embody_frame(*t, state, shape, config, commands.last())?;
        durations.push(start.elapsed().as_secs_f64());
        commands.push(cmd);
    }
    Ok(EmbodiedTrajectory { commands, durations })
}

/// Expected marker points of every mapped finger, robot base frame.
pub fn robot_markers(hand: &RobotHandModel, commands: &[f64]) -> BTreeMap<FingerId, [Vec3; 2]> {
    let joints = hand.resolve(commands);
    hand.fingers()
        .iter()
        .map(|(f, finger)| {
            (
                *f,
                [
                    hand.marker_position(&finger.markers[0], &joints),
                    hand.marker_position(&finger.markers[1], &joints),
                ],
            )
        })
        .collect()
}

/// Pose of every link in the robot base frame, in tree order.
pub fn robot_link_poses(hand: &RobotHandModel, commands: &[f64]) -> Vec<(String, Transform)> {
    let joints = hand.resolve(commands);
    let poses = hand.tree().forward_kinematics_indexed(&joints);
    hand.tree().links().iter().cloned().zip(poses).collect()
}

/// Contact surface of one robot finger, expressed in the model base frame.
pub fn robot_contact_mesh(
    config: &EmbodimentConfig,
    commands: &[f64],
    finger: FingerId,
    segments: usize,
) -> Result<Option<TriangleMesh>, MeshError> {
    let joints = config.hand.resolve(commands);
    let mesh = config.hand.contact_mesh(finger, &joints, segments, true)?;
    Ok(mesh.map(|m| m.transformed(&config.t_robot_model.invert())))
}
