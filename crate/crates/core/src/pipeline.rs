//! Whole-file operations shared by the command line tools and tests:
//! recording a take, embodying a hand-state trajectory, and comparing
//! contact surfaces.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::embodiment::{embody_trajectory, robot_contact_mesh, EmbodimentConfig, EmbodimentError};
use crate::hand_model::{finger_surface_mesh, FingerId, HandShape};
use crate::kinematics::JointValues;
use crate::mesh::MeshError;
use crate::metrics::{surface_distance, ContactSurface, MetricsError};
use crate::mocap::{fill_gaps, MarkerSequence};
use crate::record::{record_sequence_timed, reprojection_rms, RecordConfig, RecordError};
use crate::robot_hands::HandConfigError;
use crate::trajectory::{
    hand_states, HandStateRecord, Provenance, RobotCommandRecord, TrajectoryBody, TrajectoryError, TrajectoryFile,
};

/// Rings per capsule for contact surfaces used in the distance metric.
pub const EVAL_SEGMENTS: usize = 16;

pub fn tool_version() -> String {
    format!("handmap {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Embodiment(#[from] EmbodimentError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Hand(#[from] HandConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordRun {
    pub file: TrajectoryFile,
    pub durations: Vec<f64>,
    /// RMS distance between observed and fitted finger markers, meters.
    pub rms: f64,
}

/// Fills short marker gaps and maps every frame of a take.
pub fn record_take(
    seq: &MarkerSequence,
    config: &RecordConfig,
    max_gap: usize,
    source: &str,
    configs: BTreeMap<String, String>,
) -> Result<RecordRun, PipelineError> {
    let filled = fill_gaps(seq, max_gap);
    let (out, durations) = record_sequence_timed(&filled, config)?;
    let rms = reprojection_rms(
        filled.frames[out.skipped_head..].iter().zip(out.frames.iter().map(|r| &r.state)),
        &config.shape,
    );
    let provenance = Provenance {
        source: source.to_string(),
        tool: tool_version(),
        configs,
        hand: None,
        skipped_head_frames: out.skipped_head,
    };
    let body = TrajectoryBody::HandState(out.frames.iter().map(HandStateRecord::from).collect());
    Ok(RecordRun {
        file: TrajectoryFile::new(provenance, body),
        durations,
        rms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodyRun {
    pub file: TrajectoryFile,
    pub durations: Vec<f64>,
}

/// Maps a hand-state trajectory file onto a robot hand.
pub fn embody_file(
    input: &TrajectoryFile,
    shape: &HandShape,
    config: &EmbodimentConfig,
    hand_id: &str,
    source: &str,
    configs: BTreeMap<String, String>,
) -> Result<EmbodyRun, PipelineError> {
    let states = hand_states(input.hand_states()?);
    let out = embody_trajectory(&states, shape, config)?;
    let mut all_configs = input.provenance.configs.clone();
    all_configs.extend(configs);
    let provenance = Provenance {
        source: source.to_string(),
        tool: tool_version(),
        configs: all_configs,
        hand: Some(hand_id.to_string()),
        skipped_head_frames: 0,
    };
    let body = TrajectoryBody::RobotCommand(
        out.commands
            .iter()
            .map(|c| RobotCommandRecord::new(c, &config.hand))
            .collect(),
    );
    Ok(EmbodyRun {
        file: TrajectoryFile::new(provenance, body),
        durations: out.durations,
    })
}

/// Mean robot → model contact-surface distance per mapped finger, averaged
/// over the selected frames. States and commands are matched by index.
pub fn contact_distances(
    states: &[HandStateRecord],
    commands: &[RobotCommandRecord],
    shape: &HandShape,
    config: &EmbodimentConfig,
    frames: &[usize],
    samples: usize,
    seed: u64,
) -> Result<BTreeMap<FingerId, f64>, PipelineError> {
    if states.len() != commands.len() {
        return Err(PipelineError::Input(format!(
            "{} hand states but {} robot commands",
            states.len(),
            commands.len()
        )));
    }
    if frames.is_empty() {
        return Err(PipelineError::Input("no frames selected".into()));
    }
    if let Some(&i) = frames.iter().find(|&&i| i >= states.len()) {
        return Err(PipelineError::Input(format!("frame {i} out of range (0..{})", states.len())));
    }
    let hand = &*config.hand;
    let mut sums: BTreeMap<FingerId, f64> = BTreeMap::new();
    for &i in frames {
        let state = states[i].state();
        let cmd = hand.commands_from_values(&JointValues(commands[i].actuated.clone()))?;
        for &f in hand.fingers().keys() {
            let Some(robot) = robot_contact_mesh(config, &cmd, f, EVAL_SEGMENTS)? else {
                continue;
            };
            let model = finger_surface_mesh(shape, f, state.q(f), EVAL_SEGMENTS, true)?;
            let d = surface_distance(&ContactSurface::new(f, robot)?, &ContactSurface::new(f, model)?, samples, seed)?;
            *sums.entry(f).or_default() += d;
        }
    }
    Ok(sums.into_iter().map(|(f, s)| (f, s / frames.len() as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shipped;
    use crate::synth::{marker_sequence, smooth_motion};
    use crate::trajectory::{read_trajectory, write_trajectory};

    #[test]
    fn file_round_trip_gives_same_commands() {
        let mut p = shipped::pipeline();
        // default weights bias the fit by millimeters; keep them small here
        p.record = p.record.with_uniform_weights(1e-3);
        let states = smooth_motion(&p.shape, 20, 100.0, 4);
        let seq = marker_sequence(&states, &p.shape, &p.record.t_hand_model, 100.0);
        let rec = record_take(&seq, &p.record, 10, "synthetic", p.digests.clone()).unwrap();
        // accuracy has its own tests; this one is about file composition
        assert!(rec.rms < 1e-3, "{}", rec.rms);
        let reread = read_trajectory(&write_trajectory(&rec.file)).unwrap();
        assert_eq!(reread, rec.file);
        let a = embody_file(&rec.file, &p.shape, &p.embodiment, "mia", "a", BTreeMap::new()).unwrap();
        let b = embody_file(&reread, &p.shape, &p.embodiment, "mia", "a", BTreeMap::new()).unwrap();
        assert_eq!(a.file, b.file);
        let d = contact_distances(
            rec.file.hand_states().unwrap(),
            a.file.robot_commands().unwrap(),
            &p.shape,
            &p.embodiment,
            &[0, 10],
            30,
            0,
        )
        .unwrap();
        assert_eq!(d.len(), p.embodiment.hand.fingers().len());
        assert!(d.values().all(|v| v.is_finite() && *v >= 0.0));
    }
}
