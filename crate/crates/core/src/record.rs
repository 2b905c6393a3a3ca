//! Record mapping: glove markers to hand-model state.
//!
//! The model pose comes from the three back-of-hand markers and the fixed
//! glove-to-model calibration. Each finger is then fitted on its own: the
//! observed mid and tip markers are expressed in the model base frame and
//! the nine finger angles minimize the squared marker distance plus a
//! one-sided quadratic penalty on the angles, inside the joint bounds.

use std::time::Instant;

use thiserror::Error;

use crate::boxopt::{minimize, Bounds, OptimError, SolveOptions};
use crate::hand_model::{FingerAngles, FingerGeometry, FingerId, HandShape, HandState, FINGER_DOF};
use crate::mocap::{estimate_hand_frame, MarkerFrame, MarkerSequence, MocapError};
use crate::se3::{Transform, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error(transparent)]
    Mocap(#[from] MocapError),
    #[error("no hand pose available: back-of-hand markers missing and no previous state")]
    NoPoseAvailable,
    #[error("EmptyUsableSequence: no frame yields a hand pose")]
    EmptyUsableSequence,
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("invalid record config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerRecordParams {
    pub w_plus: FingerAngles,
    pub w_minus: FingerAngles,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordConfig {
    /// Pose of the hand-model base in the glove frame.
    pub t_hand_model: Transform,
    pub shape: HandShape,
    /// Thumb first.
    pub fingers: [FingerRecordParams; 5],
    pub solver: SolveOptions,
}

impl RecordConfig {
    pub fn new(
        t_hand_model: Transform,
        shape: HandShape,
        fingers: [FingerRecordParams; 5],
        solver: SolveOptions,
    ) -> Result<Self, RecordError> {
        for (f, p) in FingerId::ALL.iter().zip(&fingers) {
            if p.bounds.len() != FINGER_DOF {
                return Err(RecordError::InvalidConfig(format!("{f}: bounds need {FINGER_DOF} entries")));
            }
            if p.w_plus.iter().chain(&p.w_minus).any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(RecordError::InvalidConfig(format!("{f}: weights must be finite and >= 0")));
            }
        }
        if !t_hand_model.is_valid(1e-9) {
            return Err(RecordError::InvalidConfig("t_hand_model is not a rigid transform".into()));
        }
        Ok(RecordConfig {
            t_hand_model,
            shape,
            fingers,
            solver,
        })
    }

    /// Uniform weights, the shape's bounds and default solver options.
    pub fn with_defaults(t_hand_model: Transform, shape: HandShape, weight: f64) -> Result<Self, RecordError> {
        let fingers = FingerId::ALL.map(|f| {
            let (lo, hi) = shape.bounds(f);
            FingerRecordParams {
                w_plus: [weight; FINGER_DOF],
                w_minus: [weight; FINGER_DOF],
                bounds: Bounds::new(lo.to_vec(), hi.to_vec()).expect("shape bounds are validated"),
            }
        });
        RecordConfig::new(t_hand_model, shape, fingers, SolveOptions::default())
    }

    /// Same config with every weight replaced by `w`.
    pub fn with_uniform_weights(mut self, w: f64) -> Self {
        for p in &mut self.fingers {
            p.w_plus = [w; FINGER_DOF];
            p.w_minus = [w; FINGER_DOF];
        }
        self
    }

    pub fn params(&self, f: FingerId) -> &FingerRecordParams {
        &self.fingers[f.index()]
    }
}

/// `‖max(w₊ ∘ q, 0)‖² + ‖min(w₋ ∘ q, 0)‖²`.
pub fn regularizer(q: &[f64], w_plus: &[f64], w_minus: &[f64]) -> f64 {
    q.iter()
        .zip(w_plus.iter().zip(w_minus))
        .map(|(&qi, (&wp, &wm))| {
            let up = (wp * qi).max(0.0);
            let down = (wm * qi).min(0.0);
            up * up + down * down
        })
        .sum()
}

fn finger_objective(geometry: &FingerGeometry, targets: &[Vec3; 2], params: &FingerRecordParams, q: &[f64]) -> f64 {
    let q: &FingerAngles = q.try_into().expect("nine angles");
    let [p1, p2] = geometry.markers(q);
    (targets[0] - p1).norm_squared() + (targets[1] - p2).norm_squared() + regularizer(q, &params.w_plus, &params.w_minus)
}

/// Objective of one finger fit, exposed for tests and diagnostics.
pub fn fit_objective(config: &RecordConfig, finger: FingerId, targets: &[Vec3; 2], q: &FingerAngles) -> f64 {
    finger_objective(config.shape.geometry(finger), targets, config.params(finger), q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerFit {
    pub q: FingerAngles,
    pub objective: f64,
    /// Objective at the (clamped) warm start.
    pub start_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Squared marker residual (m²) above which a fit is retried from the
/// fixed restart points.
pub const RESTART_RESIDUAL: f64 = 1e-8;

/// Flexion levels of the restart points; the other angles start at zero.
const RESTART_FLEXION: [f64; 4] = [0.0, 0.5, 1.0, 1.5];

fn marker_residual(geometry: &FingerGeometry, targets: &[Vec3; 2], q: &[f64]) -> f64 {
    let q: &FingerAngles = q.try_into().expect("nine angles");
    let [p1, p2] = geometry.markers(q);
    (targets[0] - p1).norm_squared() + (targets[1] - p2).norm_squared()
}

/// Fits one finger to two target points given in the model base frame.
///
/// The fit starts at `warm_start`. If it leaves more than
/// [`RESTART_RESIDUAL`] of marker error it is repeated from a few fixed
/// flexed postures, and the lowest objective wins (ties keep the earlier
/// start), so the result is deterministic.
pub fn fit_finger(
    finger: FingerId,
    targets: &[Vec3; 2],
    config: &RecordConfig,
    warm_start: &FingerAngles,
) -> Result<FingerFit, RecordError> {
    if targets.iter().any(|t| !t.iter().all(|v| v.is_finite())) {
        return Err(OptimError::NonFiniteObjective { x: warm_start.to_vec() }.into());
    }
    let geometry = config.shape.geometry(finger);
    let params = config.params(finger);
    let solve = |start: &[f64]| {
        minimize(
            |q| finger_objective(geometry, targets, params, q),
            start,
            &params.bounds,
            &config.solver,
        )
    };
    let mut best = solve(warm_start)?;
    let start_objective = best.history[0];
    let mut iterations = best.iterations;
    if marker_residual(geometry, targets, &best.x) > RESTART_RESIDUAL {
        for flex in RESTART_FLEXION {
            let mut start = [0.0; FINGER_DOF];
            for s in 0..3 {
                start[3 * s] = flex;
            }
            params.bounds.clamp(&mut start);
            let r = solve(&start)?;
            iterations += r.iterations;
            if r.objective < best.objective {
                best = r;
            }
        }
    }
    Ok(FingerFit {
        q: best.x.as_slice().try_into().expect("nine angles"),
        objective: best.objective,
        start_objective,
        iterations,
        converged: best.converged,
    })
}

/// World pose of the hand-model base.
pub fn estimate_model_pose(frame: &MarkerFrame, config: &RecordConfig) -> Result<Transform, RecordError> {
    Ok(estimate_hand_frame(frame)?.compose(&config.t_hand_model))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedFrame {
    pub timestamp: f64,
    pub state: HandState,
    /// Pose copied from the previous state (hand markers unusable).
    pub pose_carried: bool,
    /// Fingers whose angles were copied because a marker was missing.
    pub carried_fingers: Vec<FingerId>,
}

/// Estimates the full hand state for one frame.
///
/// Fingers are warm-started from `previous` (zero angles, clamped, if none).
/// A finger with a missing marker keeps its previous angles; without a
/// previous state it keeps the warm start.
pub fn record_frame(
    frame: &MarkerFrame,
    config: &RecordConfig,
    previous: Option<&HandState>,
) -> Result<RecordedFrame, RecordError> {
    let (pose, pose_carried) = match estimate_model_pose(frame, config) {
        Ok(p) => (p, false),
        Err(RecordError::Mocap(MocapError::MissingHandMarkers | MocapError::DegenerateFrame(_))) => {
            (previous.ok_or(RecordError::NoPoseAvailable)?.pose, true)
        }
        Err(e) => return Err(e),
    };
    let to_model = pose.invert();
    let mut state = HandState {
        pose,
        finger_q: [[0.0; FINGER_DOF]; 5],
    };
    let mut carried_fingers = Vec::new();
    for f in FingerId::ALL {
        let mut warm = previous.map(|p| *p.q(f)).unwrap_or([0.0; FINGER_DOF]);
        config.params(f).bounds.clamp(&mut warm);
        state.finger_q[f.index()] = match frame.finger(f) {
            Some(observed) => {
                let targets = observed.map(|p| to_model.transform_point(&p));
                fit_finger(f, &targets, config, &warm)?.q
            }
            None => {
                carried_fingers.push(f);
                warm
            }
        };
    }
    Ok(RecordedFrame {
        timestamp: frame.timestamp,
        state,
        pose_carried,
        carried_fingers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutput {
    pub frames: Vec<RecordedFrame>,
    /// Leading frames dropped because no pose was available yet.
    pub skipped_head: usize,
}

/// [`record_sequence`] plus the wall-clock time of every mapped frame.
pub fn record_sequence_timed(seq: &MarkerSequence, config: &RecordConfig) -> Result<(RecordOutput, Vec<f64>), RecordError> {
    let mut frames: Vec<RecordedFrame> = Vec::with_capacity(seq.frames.len());
    let mut durations = Vec::with_capacity(seq.frames.len());
    let mut skipped_head = 0;
    for frame in &seq.frames {
        let previous = frames.last().map(|r| &r.state);
        let start = Instant::now();
        let result = record_frame(frame, config, previous);
        let elapsed = start.elapsed().as_secs_f64();
        match result {
            Ok(r) => {
                frames.push(r);
                durations.push(elapsed);
            }
            Err(RecordError::NoPoseAvailable) if frames.is_empty() => skipped_head += 1,
            Err(e) => return Err(e),
        }
    }
    if frames.is_empty() {
        return Err(RecordError::EmptyUsableSequence);
    }
    Ok((RecordOutput { frames, skipped_head }, durations))
}

/// Maps every frame, each warm-started from the previous result.
pub fn record_sequence(seq: &MarkerSequence, config: &RecordConfig) -> Result<RecordOutput, RecordError> {
    Ok(record_sequence_timed(seq, config)?.0)
}

/// Distances between observed finger markers and the model's virtual
/// markers, for every finger marker present in `frame`.
pub fn reprojection_errors(frame: &MarkerFrame, state: &HandState, shape: &HandShape) -> Vec<f64> {
    let predicted = crate::hand_model::hand_markers(shape, state);
    let mut out = Vec::new();
    for f in FingerId::ALL {
        for (k, label) in [crate::mocap::MarkerLabel::Mid(f), crate::mocap::MarkerLabel::Tip(f)]
            .into_iter()
            .enumerate()
        {
            if let Some(p) = frame.get(label) {
                out.push((p - predicted[f.index()][k]).norm());
            }
        }
    }
    out
}

/// Root mean square of all reprojection errors over matched frames.
pub fn reprojection_rms<'a>(pairs: impl IntoIterator<Item = (&'a MarkerFrame, &'a HandState)>, shape: &HandShape) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (frame, state) in pairs {
        for e in reprojection_errors(frame, state, shape) {
            sum += e * e;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}
