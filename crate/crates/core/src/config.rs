//! On-disk configuration formats (TOML) and their conversion into the
//! validated in-memory types.
//!
//! Files reference each other by path relative to the referencing file.
//! Reading goes through [`ConfigSource`] so the same loaders serve the
//! filesystem and the configs embedded in the library.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::boxopt::{Bounds, SolveOptions};
use crate::embodiment::EmbodimentConfig;
use crate::hand_model::{
    FingerAngles, FingerBasis, FingerId, FingerModel, HandShape, MarkerAttachment, ShapeError, FINGER_DOF, SHAPE_DIM,
};
use crate::record::{FingerRecordParams, RecordConfig};
use crate::robot_hands::{load_hand_config, HandConfigError, RobotHandModel};
use crate::se3::{Origin, Transform};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl ConfigError {
    fn invalid(path: &Path, message: impl ToString) -> Self {
        ConfigError::Invalid {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

/// Where configuration text comes from.
pub trait ConfigSource {
    fn read(&self, path: &Path) -> Result<String, ConfigError>;
}

/// Plain filesystem access.
pub struct FileSystem;

impl ConfigSource for FileSystem {
    fn read(&self, path: &Path) -> Result<String, ConfigError> {
        std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves `target` relative to the directory containing `from`.
pub fn relative_to(from: &Path, target: &str) -> PathBuf {
    let t = Path::new(target);
    if t.is_absolute() {
        return t.to_path_buf();
    }
    let mut out = from.parent().map(Path::to_path_buf).unwrap_or_default();
    for part in t.components() {
        match part {
            std::path::Component::ParentDir if out.components().next_back().is_some_and(|c| matches!(c, std::path::Component::Normal(_))) => {
                out.pop();
            }
            std::path::Component::CurDir => {}
            other => out.push(other),
        }
    }
    out
}

/// Either one value for every slot or one value per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spread {
    Scalar(f64),
    Each(Vec<f64>),
}

impl Spread {
    fn expand<const N: usize>(&self, what: &str) -> Result<[f64; N], String> {
        match self {
            Spread::Scalar(v) => Ok([*v; N]),
            Spread::Each(v) if v.len() == N => Ok(std::array::from_fn(|i| v[i])),
            Spread::Each(v) => Err(format!("{what}: expected {N} values, got {}", v.len())),
        }
    }
}

// ---------------------------------------------------------------------------
// Hand shape

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeFile {
    pub schema_version: u32,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Shape components applied to every finger, as relative changes of the
    /// mean geometry per unit coefficient.
    #[serde(default)]
    pub modes: Vec<ShapeMode>,
    pub fingers: BTreeMap<FingerId, FingerShapeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeMode {
    pub component: usize,
    #[serde(default)]
    pub base: Option<Spread>,
    #[serde(default)]
    pub lengths: Option<Spread>,
    #[serde(default)]
    pub radii: Option<Spread>,
}

/// Absolute coefficients (meters per unit coefficient) for one finger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisRow {
    pub component: usize,
    #[serde(default)]
    pub base: Option<[f64; 3]>,
    #[serde(default)]
    pub lengths: Option<[f64; 3]>,
    #[serde(default)]
    pub radii: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerShapeSpec {
    pub base_xyz: [f64; 3],
    #[serde(default)]
    pub base_rpy: [f64; 3],
    pub lengths: [f64; 3],
    pub radii: [f64; 3],
    pub q_min: Spread3,
    pub q_max: Spread3,
    pub markers: [MarkerAttachment; 2],
    #[serde(default)]
    pub basis: Vec<BasisRow>,
}

/// Joint bounds: one triplet repeated for every segment, or all nine values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spread3 {
    Triplet([f64; 3]),
    All([f64; FINGER_DOF]),
}

impl Spread3 {
    fn expand(&self) -> FingerAngles {
        match self {
            Spread3::Triplet(t) => std::array::from_fn(|i| t[i % 3]),
            Spread3::All(a) => *a,
        }
    }
}

pub fn parse_shape(text: &str) -> Result<HandShape, ShapeError> {
    let file: ShapeFile = toml::from_str(text).map_err(|e| ShapeError::Parse(e.to_string()))?;
    shape_from_file(&file)
}

pub fn shape_from_file(file: &ShapeFile) -> Result<HandShape, ShapeError> {
    let parse = |m: String| ShapeError::Parse(m);
    if file.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(parse(format!("unsupported schema_version {}", file.schema_version)));
    }
    let beta: [f64; SHAPE_DIM] = match &file.beta {
        None => [0.0; SHAPE_DIM],
        Some(b) if b.len() == SHAPE_DIM => std::array::from_fn(|i| b[i]),
        Some(b) => {
            return Err(ShapeError::WrongCount {
                expected: SHAPE_DIM,
                got: b.len(),
            })
        }
    };
    for m in &file.modes {
        if m.component >= SHAPE_DIM {
            return Err(parse(format!("mode component {} out of range", m.component)));
        }
    }
    let mut fingers = Vec::with_capacity(5);
    for f in FingerId::ALL {
        let spec = file
            .fingers
            .get(&f)
            .ok_or_else(|| parse(format!("missing finger '{f}'")))?;
        let mut mean = [0.0; 9];
        mean[0..3].copy_from_slice(&spec.base_xyz);
        mean[3..6].copy_from_slice(&spec.lengths);
        mean[6..9].copy_from_slice(&spec.radii);
        let mut coeffs = [[0.0; 9]; SHAPE_DIM];
        for m in &file.modes {
            let row = &mut coeffs[m.component];
            let groups = [(0, &m.base, "base"), (3, &m.lengths, "lengths"), (6, &m.radii, "radii")];
            for (offset, spread, what) in groups {
                if let Some(s) = spread {
                    let rel: [f64; 3] = s.expand(what).map_err(parse)?;
                    for k in 0..3 {
                        row[offset + k] += rel[k] * mean[offset + k];
                    }
                }
            }
        }
        for b in &spec.basis {
            if b.component >= SHAPE_DIM {
                return Err(parse(format!("{f}: basis component {} out of range", b.component)));
            }
            let row = &mut coeffs[b.component];
            for (offset, v) in [(0, b.base), (3, b.lengths), (6, b.radii)] {
                if let Some(v) = v {
                    for k in 0..3 {
                        row[offset + k] += v[k];
                    }
                }
            }
        }
        fingers.push(FingerModel {
            base_rotation: Transform::from_rpy(spec.base_rpy, [0.0; 3]).rotation,
            basis: FingerBasis { mean, coeffs },
            markers: spec.markers,
            q_min: spec.q_min.expand(),
            q_max: spec.q_max.expand(),
        });
    }
    let fingers: [FingerModel; 5] = fingers.try_into().expect("five fingers");
    HandShape::new(beta, fingers)
}

// ---------------------------------------------------------------------------
// Record mapping

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(default)]
    pub w_plus: Option<Spread>,
    #[serde(default)]
    pub w_minus: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FingerRecordSpec {
    #[serde(default)]
    pub w_plus: Option<Spread>,
    #[serde(default)]
    pub w_minus: Option<Spread>,
    #[serde(default)]
    pub q_min: Option<Spread3>,
    #[serde(default)]
    pub q_max: Option<Spread3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFile {
    pub schema_version: u32,
    /// Pose of the hand-model base in the hand (glove) frame.
    pub t_hand_model: Origin,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub fingers: BTreeMap<FingerId, FingerRecordSpec>,
    #[serde(default)]
    pub solver: SolveOptions,
}

/// Default penalty weight for every joint in both directions.
pub const DEFAULT_WEIGHT: f64 = 0.01;

pub fn parse_record(text: &str, shape: HandShape) -> Result<RecordConfig, String> {
    let file: RecordFile = toml::from_str(text).map_err(|e| e.to_string())?;
    record_from_file(&file, shape)
}

pub fn record_from_file(file: &RecordFile, shape: HandShape) -> Result<RecordConfig, String> {
    if file.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(format!("unsupported schema_version {}", file.schema_version));
    }
    let expand = |s: &Option<Spread>, fallback: FingerAngles, what: &str| -> Result<FingerAngles, String> {
        match s {
            None => Ok(fallback),
            Some(s) => s.expand::<FINGER_DOF>(what),
        }
    };
    let w_plus = expand(&file.weights.w_plus, [DEFAULT_WEIGHT; FINGER_DOF], "weights.w_plus")?;
    let w_minus = expand(&file.weights.w_minus, [DEFAULT_WEIGHT; FINGER_DOF], "weights.w_minus")?;
    let mut fingers = Vec::with_capacity(5);
    for f in FingerId::ALL {
        let spec = file.fingers.get(&f).cloned().unwrap_or_default();
        let (lo, hi) = shape.bounds(f);
        let lo = spec.q_min.as_ref().map(Spread3::expand).unwrap_or(lo);
        let hi = spec.q_max.as_ref().map(Spread3::expand).unwrap_or(hi);
        fingers.push(FingerRecordParams {
            w_plus: expand(&spec.w_plus, w_plus, "w_plus")?,
            w_minus: expand(&spec.w_minus, w_minus, "w_minus")?,
            bounds: Bounds::new(lo.to_vec(), hi.to_vec()).map_err(|e| format!("{f}: {e}"))?,
        });
    }
    let fingers: [FingerRecordParams; 5] = fingers.try_into().expect("five fingers");
    RecordConfig::new(Transform::from(&file.t_hand_model), shape, fingers, file.solver).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Embodiment mapping

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbodimentFile {
    pub schema_version: u32,
    /// Hand-config path relative to this file.
    pub hand: String,
    /// Pose of the hand-model base in the robot hand base frame.
    #[serde(default)]
    pub t_robot_model: Origin,
    #[serde(default)]
    pub solver: SolveOptions,
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineFile {
    pub schema_version: u32,
    pub shape: String,
    pub record: String,
    pub embodiment: String,
    #[serde(default)]
    pub io: IoOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoOptions {
    /// Longest marker gap (frames) filled by interpolation.
    pub max_gap: usize,
    /// Seed for surface sampling.
    pub seed: u64,
    /// Surface samples per finger for the distance metric.
    pub samples: usize,
    /// Foreign marker label → canonical label.
    pub label_map: BTreeMap<String, String>,
}

impl Default for IoOptions {
    fn default() -> Self {
        IoOptions {
            max_gap: crate::mocap::DEFAULT_MAX_GAP,
            seed: 0,
            samples: 100,
            label_map: BTreeMap::new(),
        }
    }
}

/// Loaded and cross-validated pipeline configuration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub shape: HandShape,
    pub record: RecordConfig,
    pub embodiment: EmbodimentConfig,
    pub io: IoOptions,
    /// Path → SHA-256 of every file that went into this pipeline.
    pub digests: BTreeMap<String, String>,
}

/// Reads one file and records its digest.
fn read_tracked(
    source: &dyn ConfigSource,
    path: &Path,
    digests: &mut BTreeMap<String, String>,
) -> Result<String, ConfigError> {
    let text = source.read(path)?;
    digests.insert(path.display().to_string(), digest(text.as_bytes()));
    Ok(text)
}

pub fn load_shape(source: &dyn ConfigSource, path: &Path, digests: &mut BTreeMap<String, String>) -> Result<HandShape, ConfigError> {
    let text = read_tracked(source, path, digests)?;
    parse_shape(&text).map_err(|e| ConfigError::invalid(path, e))
}

pub fn load_record(
    source: &dyn ConfigSource,
    path: &Path,
    shape: HandShape,
    digests: &mut BTreeMap<String, String>,
) -> Result<RecordConfig, ConfigError> {
    let text = read_tracked(source, path, digests)?;
    parse_record(&text, shape).map_err(|e| ConfigError::invalid(path, e))
}

pub fn load_hand(source: &dyn ConfigSource, path: &Path, digests: &mut BTreeMap<String, String>) -> Result<RobotHandModel, ConfigError> {
    let text = read_tracked(source, path, digests)?;
    load_hand_config(&text).map_err(|e: HandConfigError| ConfigError::invalid(path, e))
}

pub fn load_embodiment(
    source: &dyn ConfigSource,
    path: &Path,
    digests: &mut BTreeMap<String, String>,
) -> Result<EmbodimentConfig, ConfigError> {
    let text = read_tracked(source, path, digests)?;
    let file: EmbodimentFile = toml::from_str(&text).map_err(|e| ConfigError::invalid(path, e))?;
    if file.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(ConfigError::invalid(
            path,
            format!("unsupported schema_version {}", file.schema_version),
        ));
    }
    let hand = load_hand(source, &relative_to(path, &file.hand), digests)?;
    EmbodimentConfig::new(Transform::from(&file.t_robot_model), Arc::new(hand), file.solver)
        .map_err(|e| ConfigError::invalid(path, e))
}

pub fn load_pipeline(source: &dyn ConfigSource, path: &Path) -> Result<Pipeline, ConfigError> {
    let mut digests = BTreeMap::new();
    let text = read_tracked(source, path, &mut digests)?;
    let file: PipelineFile = toml::from_str(&text).map_err(|e| ConfigError::invalid(path, e))?;
    if file.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(ConfigError::invalid(
            path,
            format!("unsupported schema_version {}", file.schema_version),
        ));
    }
    for (from, to) in &file.io.label_map {
        if crate::mocap::MarkerLabel::parse(to).is_none() {
            return Err(ConfigError::invalid(path, format!("label_map: '{from}' maps to unknown label '{to}'")));
        }
    }
    let shape = load_shape(source, &relative_to(path, &file.shape), &mut digests)?;
    let record = load_record(source, &relative_to(path, &file.record), shape.clone(), &mut digests)?;
    let embodiment = load_embodiment(source, &relative_to(path, &file.embodiment), &mut digests)?;
    Ok(Pipeline {
        shape,
        record,
        embodiment,
        io: file.io,
        digests,
    })
}
