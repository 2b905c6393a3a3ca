//! Request and response bodies of the HTTP/websocket service, and the
//! mapping behind them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embodiment::{embody_frame, robot_link_poses, robot_markers, EmbodimentConfig, EmbodimentError, RobotCommand};
use crate::hand_model::{hand_markers, FingerId, HandShape, HandState, FINGER_DOF};
use crate::se3::{PoseRecord, Vec3};

pub const FINGER_ANGLE_COUNT: usize = 5 * FINGER_DOF;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorInfo {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Locked value, if the joint is not commanded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandInfo {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub fingers: Vec<FingerId>,
    pub actuators: Vec<ActuatorInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandsResponse {
    pub hands: Vec<HandInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleInfo {
    pub finger: FingerId,
    /// 0..9 within the finger: segment * 3 + (flexion, abduction, twist).
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

/// Interactive parameters of the hand model: 3 global orientation
/// components and 45 finger angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub parameters: usize,
    pub global_orientation: [f64; 2],
    pub finger_angles: Vec<AngleInfo>,
}

pub fn model_info(shape: &HandShape) -> ModelInfo {
    let finger_angles = FingerId::ALL
        .iter()
        .flat_map(|&f| {
            let (lo, hi) = shape.bounds(f);
            (0..FINGER_DOF).map(move |k| AngleInfo {
                finger: f,
                index: k,
                min: lo[k],
                max: hi[k],
            })
        })
        .collect();
    ModelInfo {
        parameters: 3 + FINGER_ANGLE_COUNT,
        global_orientation: [-std::f64::consts::PI, std::f64::consts::PI],
        finger_angles,
    }
}

pub fn hand_info(id: &str, config: &EmbodimentConfig) -> HandInfo {
    HandInfo {
        id: id.to_string(),
        name: config.hand.name.clone(),
        description: config.hand.description.clone(),
        fingers: config.hand.fingers().keys().copied().collect(),
        actuators: config
            .hand
            .actuators()
            .iter()
            .map(|a| ActuatorInfo {
                name: a.name.clone(),
                min: a.bounds[0],
                max: a.bounds[1],
                fixed: a.fixed,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbodyRequest {
    pub hand: String,
    /// Rotation vector (axis times angle) of the model base.
    pub global_orientation: [f64; 3],
    #[serde(default)]
    pub translation: [f64; 3],
    /// 45 angles, thumb first, nine per finger.
    pub finger_angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPose {
    pub name: String,
    pub pose: PoseRecord,
}

/// Result of one interactive mapping. Positions are world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodyResponse {
    pub hand: String,
    pub base_pose: PoseRecord,
    /// Actuator commands in actuator order.
    pub actuated: Vec<NamedValue>,
    pub residuals: BTreeMap<FingerId, f64>,
    pub model_markers: BTreeMap<FingerId, [[f64; 3]; 2]>,
    pub robot_markers: BTreeMap<FingerId, [[f64; 3]; 2]>,
    pub links: Vec<LinkPose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown hand '{0}'")]
    UnknownHand(String),
    #[error("mapping failed: {0}")]
    Embodiment(#[from] EmbodimentError),
}

/// Checks a request against the model and builds the hand state.
pub fn request_state(req: &EmbodyRequest, shape: &HandShape) -> Result<HandState, ApiError> {
    if req.finger_angles.len() != FINGER_ANGLE_COUNT {
        return Err(ApiError::BadRequest(format!(
            "expected {FINGER_ANGLE_COUNT} finger angles, got {}",
            req.finger_angles.len()
        )));
    }
    let all = req.global_orientation.iter().chain(&req.translation).chain(&req.finger_angles);
    if !all.clone().all(|v| v.is_finite()) {
        return Err(ApiError::BadRequest("all values must be finite".into()));
    }
    for f in FingerId::ALL {
        let (lo, hi) = shape.bounds(f);
        for k in 0..FINGER_DOF {
            let v = req.finger_angles[f.index() * FINGER_DOF + k];
            if v < lo[k] || v > hi[k] {
                return Err(ApiError::BadRequest(format!(
                    "{f} angle {k} = {v} outside [{}, {}]",
                    lo[k], hi[k]
                )));
            }
        }
    }
    HandState::from_parameters(req.global_orientation, req.translation, &req.finger_angles)
        .map_err(|e| ApiError::BadRequest(e.to_string()))
}

fn points(p: &[Vec3; 2]) -> [[f64; 3]; 2] {
    p.map(|v| [v.x, v.y, v.z])
}

/// Maps one request. `previous` is the last command of the same session,
/// used as the warm start.
pub fn embody_request(
    req: &EmbodyRequest,
    shape: &HandShape,
    config: &EmbodimentConfig,
    previous: Option<&RobotCommand>,
) -> Result<(EmbodyResponse, RobotCommand), ApiError> {
    let state = request_state(req, shape)?;
    let previous = previous.filter(|p| p.commands.len() == config.hand.actuators().len());
    let cmd = embody_frame(0.0, &state, shape, config, previous)?;
    let hand = &*config.hand;
    let model = hand_markers(shape, &state);
    let base = cmd.base_pose;
    let response = EmbodyResponse {
        hand: req.hand.clone(),
        base_pose: PoseRecord::from(&base),
        actuated: hand
            .actuators()
            .iter()
            .zip(&cmd.commands)
            .map(|(a, v)| NamedValue {
                name: a.name.clone(),
                value: *v,
            })
            .collect(),
        residuals: cmd.residuals.clone(),
        model_markers: hand.fingers().keys().map(|f| (*f, points(&model[f.index()]))).collect(),
        robot_markers: robot_markers(hand, &cmd.commands)
            .into_iter()
            .map(|(f, m)| (f, points(&m.map(|p| base.transform_point(&p)))))
            .collect(),
        links: robot_link_poses(hand, &cmd.commands)
            .into_iter()
            .map(|(name, pose)| LinkPose {
                name,
                pose: PoseRecord::from(&base.compose(&pose)),
            })
            .collect(),
    };
    Ok((response, cmd))
}
