//! Configuration files compiled into the binary, so the tools and the
//! service work without a config directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::config::{load_embodiment, load_pipeline, parse_record, parse_shape, ConfigError, ConfigSource, Pipeline};
use crate::embodiment::EmbodimentConfig;
use crate::hand_model::HandShape;
use crate::record::RecordConfig;
use crate::robot_hands::{clone_from_shape, load_hand_config, RobotHandModel};
use crate::se3::Transform;

pub const HAND_SHAPE: &str = include_str!("../configs/hand_shape.toml");
pub const RECORD: &str = include_str!("../configs/record.toml");
pub const PIPELINE: &str = include_str!("../configs/pipeline.toml");

/// Path (relative to the config root) → contents.
pub const FILES: [(&str, &str); 9] = [
    ("pipeline.toml", PIPELINE),
    ("hand_shape.toml", HAND_SHAPE),
    ("record.toml", RECORD),
    ("hands/mia.toml", include_str!("../configs/hands/mia.toml")),
    ("hands/shadow.toml", include_str!("../configs/hands/shadow.toml")),
    ("hands/robotiq_2f140.toml", include_str!("../configs/hands/robotiq_2f140.toml")),
    ("embodiment/mia.toml", include_str!("../configs/embodiment/mia.toml")),
    ("embodiment/shadow.toml", include_str!("../configs/embodiment/shadow.toml")),
    ("embodiment/robotiq_2f140.toml", include_str!("../configs/embodiment/robotiq_2f140.toml")),
];

/// Robot hands with a shipped embodiment config.
pub const HAND_IDS: [&str; 3] = ["mia", "shadow", "robotiq_2f140"];

/// Hand id of the robot built from the hand model itself.
pub const CLONE_ID: &str = "clone";

/// The shipped files as a [`ConfigSource`].
pub struct Embedded;

impl ConfigSource for Embedded {
    fn read(&self, path: &Path) -> Result<String, ConfigError> {
        let key = path.to_string_lossy().replace('\\', "/");
        FILES
            .iter()
            .find(|(p, _)| *p == key)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| ConfigError::Io {
                path: path.to_path_buf(),
                message: "no such shipped config".into(),
            })
    }
}

pub fn hand_shape() -> HandShape {
    parse_shape(HAND_SHAPE).expect("shipped hand shape is valid")
}

pub fn record_config() -> RecordConfig {
    parse_record(RECORD, hand_shape()).expect("shipped record config is valid")
}

pub fn pipeline() -> Pipeline {
    load_pipeline(&Embedded, Path::new("pipeline.toml")).expect("shipped pipeline is valid")
}

pub fn hand(id: &str) -> Option<RobotHandModel> {
    let path = format!("hands/{id}.toml");
    let (_, text) = FILES.iter().find(|(p, _)| *p == path)?;
    Some(load_hand_config(text).expect("shipped hand config is valid"))
}

pub fn mia_hand() -> RobotHandModel {
    hand("mia").expect("mia is shipped")
}

pub fn shadow_hand() -> RobotHandModel {
    hand("shadow").expect("shadow is shipped")
}

pub fn robotiq_hand() -> RobotHandModel {
    hand("robotiq_2f140").expect("robotiq_2f140 is shipped")
}

/// Robot hand with the hand model's own kinematics and markers.
pub fn clone_hand(shape: &HandShape) -> RobotHandModel {
    RobotHandModel::from_file(&clone_from_shape(shape)).expect("clone of a valid shape is valid")
}

/// Shipped embodiment config for `id`, or the self-embodiment for
/// [`CLONE_ID`] (identity placement, same solver settings as Mia).
pub fn embodiment(id: &str) -> Option<EmbodimentConfig> {
    if id == CLONE_ID {
        let mia = embodiment("mia")?;
        let hand = Arc::new(clone_hand(&hand_shape()));
        return Some(EmbodimentConfig::new(Transform::identity(), hand, mia.solver).expect("identity is rigid"));
    }
    if !HAND_IDS.contains(&id) {
        return None;
    }
    let mut digests = BTreeMap::new();
    Some(load_embodiment(&Embedded, Path::new(&format!("embodiment/{id}.toml")), &mut digests).expect("shipped embodiment is valid"))
}
