//! Trajectory files (JSON): hand-model states from the record mapping and
//! robot commands from the embodiment mapping.
//!
//! Angles are radians, positions meters, orientations unit quaternions
//! `[w, x, y, z]`. Every file carries the source it was computed from and
//! the SHA-256 digests of the configuration files involved.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embodiment::RobotCommand;
use crate::hand_model::{FingerAngles, FingerId, HandState};
use crate::record::RecordedFrame;
use crate::robot_hands::RobotHandModel;
use crate::se3::{PoseRecord, Transform};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid trajectory file: {0}")]
    Parse(String),
    #[error("unsupported trajectory schema_version {0}")]
    UnsupportedVersion(u32),
    #[error("timestamps must increase (frame {0})")]
    NonMonotoneTimestamps(usize),
    #[error("frame {0}: {1}")]
    InvalidFrame(usize, String),
    #[error("expected a {expected} trajectory, got {got}")]
    KindMismatch { expected: &'static str, got: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    /// Input the frames were computed from, as given on the command line.
    pub source: String,
    pub tool: String,
    /// Config path → SHA-256.
    pub configs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub skipped_head_frames: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerTable {
    pub thumb: FingerAngles,
    pub index: FingerAngles,
    pub middle: FingerAngles,
    pub ring: FingerAngles,
    pub little: FingerAngles,
}

impl From<&[FingerAngles; 5]> for FingerTable {
    fn from(q: &[FingerAngles; 5]) -> Self {
        FingerTable {
            thumb: q[0],
            index: q[1],
            middle: q[2],
            ring: q[3],
            little: q[4],
        }
    }
}

impl From<&FingerTable> for [FingerAngles; 5] {
    fn from(t: &FingerTable) -> Self {
        [t.thumb, t.index, t.middle, t.ring, t.little]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandStateRecord {
    pub timestamp: f64,
    /// World pose of the hand-model base.
    pub pose: PoseRecord,
    pub finger_q: FingerTable,
    #[serde(default, skip_serializing_if = "is_false")]
    pub pose_carried: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub carried_fingers: Vec<FingerId>,
}

impl From<&RecordedFrame> for HandStateRecord {
    fn from(r: &RecordedFrame) -> Self {
        HandStateRecord {
            timestamp: r.timestamp,
            pose: PoseRecord::from(&r.state.pose),
            finger_q: FingerTable::from(&r.state.finger_q),
            pose_carried: r.pose_carried,
            carried_fingers: r.carried_fingers.clone(),
        }
    }
}

impl HandStateRecord {
    pub fn state(&self) -> HandState {
        HandState {
            pose: Transform::from(&self.pose),
            finger_q: (&self.finger_q).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotCommandRecord {
    pub timestamp: f64,
    /// World pose of the robot hand base.
    pub base_pose: PoseRecord,
    /// Actuated joint → command, locked joints included.
    pub actuated: BTreeMap<String, f64>,
    /// Finger → marker residual in meters.
    pub residuals: BTreeMap<FingerId, f64>,
}

impl RobotCommandRecord {
    pub fn new(cmd: &RobotCommand, hand: &RobotHandModel) -> Self {
        RobotCommandRecord {
            timestamp: cmd.timestamp,
            base_pose: PoseRecord::from(&cmd.base_pose),
            actuated: cmd.actuated_values(hand).0,
            residuals: cmd.residuals.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "frames", rename_all = "snake_case")]
pub enum TrajectoryBody {
    HandState(Vec<HandStateRecord>),
    RobotCommand(Vec<RobotCommandRecord>),
}

impl TrajectoryBody {
    pub fn kind(&self) -> &'static str {
        match self {
            TrajectoryBody::HandState(_) => "hand_state",
            TrajectoryBody::RobotCommand(_) => "robot_command",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TrajectoryBody::HandState(f) => f.len(),
            TrajectoryBody::RobotCommand(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn timestamps(&self) -> Vec<f64> {
        match self {
            TrajectoryBody::HandState(f) => f.iter().map(|r| r.timestamp).collect(),
            TrajectoryBody::RobotCommand(f) => f.iter().map(|r| r.timestamp).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub schema_version: u32,
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: TrajectoryBody,
}

impl TrajectoryFile {
    pub fn new(provenance: Provenance, body: TrajectoryBody) -> Self {
        TrajectoryFile {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            provenance,
            body,
        }
    }

    pub fn hand_states(&self) -> Result<&[HandStateRecord], TrajectoryError> {
        match &self.body {
            TrajectoryBody::HandState(f) => Ok(f),
            other => Err(TrajectoryError::KindMismatch {
                expected: "hand_state",
                got: other.kind(),
            }),
        }
    }

    pub fn robot_commands(&self) -> Result<&[RobotCommandRecord], TrajectoryError> {
        match &self.body {
            TrajectoryBody::RobotCommand(f) => Ok(f),
            other => Err(TrajectoryError::KindMismatch {
                expected: "robot_command",
                got: other.kind(),
            }),
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.schema_version != TRAJECTORY_SCHEMA_VERSION {
            return Err(TrajectoryError::UnsupportedVersion(self.schema_version));
        }
        let ts = self.body.timestamps();
        for (i, t) in ts.iter().enumerate() {
            if !t.is_finite() {
                return Err(TrajectoryError::InvalidFrame(i, "non-finite timestamp".into()));
            }
        }
        if let Some(i) = ts.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(TrajectoryError::NonMonotoneTimestamps(i + 1));
        }
        let check_pose = |i: usize, p: &PoseRecord| {
            let q_norm = p.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !p.translation.iter().chain(&p.rotation).all(|v| v.is_finite()) || !(q_norm > 1e-9) {
                Err(TrajectoryError::InvalidFrame(i, "invalid pose".into()))
            } else {
                Ok(())
            }
        };
        match &self.body {
            TrajectoryBody::HandState(frames) => {
                for (i, r) in frames.iter().enumerate() {
                    check_pose(i, &r.pose)?;
                    let q: [FingerAngles; 5] = (&r.finger_q).into();
                    if !q.iter().flatten().all(|v| v.is_finite()) {
                        return Err(TrajectoryError::InvalidFrame(i, "non-finite finger angle".into()));
                    }
                }
            }
            TrajectoryBody::RobotCommand(frames) => {
                for (i, r) in frames.iter().enumerate() {
                    check_pose(i, &r.base_pose)?;
                    if !r.actuated.values().chain(r.residuals.values()).all(|v| v.is_finite()) {
                        return Err(TrajectoryError::InvalidFrame(i, "non-finite value".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn read_trajectory(text: &str) -> Result<TrajectoryFile, TrajectoryError> {
    let file: TrajectoryFile = serde_json::from_str(text).map_err(|e| TrajectoryError::Parse(e.to_string()))?;
    file.validate()?;
    Ok(file)
}

pub fn write_trajectory(file: &TrajectoryFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("trajectory serializes");
    s.push('\n');
    s
}

/// `(timestamp, state)` pairs of a hand-state trajectory.
pub fn hand_states(records: &[HandStateRecord]) -> Vec<(f64, HandState)> {
    records.iter().map(|r| (r.timestamp, r.state())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryFile {
        let mut q = [[0.0; 9]; 5];
        q[1][0] = 0.123456789012345678;
        q[4][8] = -1.0 / 3.0;
        let state = HandState {
            pose: Transform::from_rpy([0.1, 0.2, 0.3], [1e-3, 0.2, -0.7]),
            finger_q: q,
        };
        let frames = (0..3)
            .map(|i| RecordedFrame {
                timestamp: i as f64 / 100.0,
                state,
                pose_carried: i == 1,
                carried_fingers: if i == 2 { vec![FingerId::Ring] } else { vec![] },
            })
            .collect::<Vec<_>>();
        let mut configs = BTreeMap::new();
        configs.insert("record.toml".into(), "ab".into());
        TrajectoryFile::new(
            Provenance {
                source: "take.tsv".into(),
                tool: "test".into(),
                configs,
                hand: None,
                skipped_head_frames: 2,
            },
            TrajectoryBody::HandState(frames.iter().map(HandStateRecord::from).collect()),
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let file = sample();
        let text = write_trajectory(&file);
        assert_eq!(read_trajectory(&text).unwrap(), file);
        assert!(text.contains("\"kind\": \"hand_state\""));
    }

    #[test]
    fn robot_command_round_trip() {
        let mut actuated = BTreeMap::new();
        actuated.insert("mrl_flexion".to_string(), 0.7000000000000001);
        let mut residuals = BTreeMap::new();
        residuals.insert(FingerId::Little, 1.5e-3);
        let file = TrajectoryFile::new(
            Provenance::default(),
            TrajectoryBody::RobotCommand(vec![RobotCommandRecord {
                timestamp: 0.25,
                base_pose: PoseRecord::from(&Transform::identity()),
                actuated,
                residuals,
            }]),
        );
        let back = read_trajectory(&write_trajectory(&file)).unwrap();
        assert_eq!(back, file);
        assert!(back.hand_states().is_err());
    }

    #[test]
    fn rejects_bad_files() {
        let mut file = sample();
        file.schema_version = 7;
        assert_eq!(
            read_trajectory(&write_trajectory(&file)),
            Err(TrajectoryError::UnsupportedVersion(7))
        );
        let mut file = sample();
        if let TrajectoryBody::HandState(f) = &mut file.body {
            f[2].timestamp = 0.0;
        }
        assert_eq!(
            read_trajectory(&write_trajectory(&file)),
            Err(TrajectoryError::NonMonotoneTimestamps(2))
        );
        assert!(matches!(read_trajectory("{"), Err(TrajectoryError::Parse(_))));
    }
}
