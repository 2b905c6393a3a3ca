//! Robot hand models: kinematic tree, actuation, joint coupling and the
//! expected-marker attachments used by the embodiment mapping.
//!
//! Coupling rules:
//! - `mirror`: `driven = source * ratio` (several joints on one motor).
//! - `sequential`: one command `c` drives two joints; the first moves until
//!   it reaches its upper limit, then the second takes over:
//!   `first = clamp(c, min1, max1)`, `second = min2 + max(0, c - max1)`.
//!   Only this saturation direction is modeled.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::{FingerId, HandShape, FINGER_DOF, SEGMENTS};
use crate::kinematics::{Joint, JointValues, KinematicTree, KinematicsError};
use crate::mesh::{Capsule, MeshError, TriangleMesh};
use crate::se3::{Origin, Transform, Vec3};

pub const HAND_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandConfigError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("coupling cycle involving joint '{0}'")]
    CouplingCycle(String),
}

impl From<KinematicsError> for HandConfigError {
    fn from(e: KinematicsError) -> Self {
        match e {
            KinematicsError::DanglingReference(l) => HandConfigError::DanglingReference(format!("link '{l}'")),
            other => HandConfigError::SchemaError(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub child: String,
    #[serde(default)]
    pub origin: Origin,
    #[serde(rename = "type")]
    pub kind: JointType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    pub link: String,
    #[serde(default)]
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerSpec {
    /// Actuated joints whose commands move this finger.
    pub joints: Vec<String>,
    /// Mid and tip marker attachments.
    pub markers: Vec<MarkerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CouplingSpec {
    Mirror { joint: String, source: String, ratio: f64 },
    Sequential { first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatedSpec {
    pub joint: String,
    /// Locks the joint at this value; it is then reported but never optimized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpec {
    pub finger: FingerId,
    pub link: String,
    pub from: [f64; 3],
    pub to: [f64; 3],
    pub radius: f64,
    /// Side of the capsule that counts as contact surface, in link frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palmar: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandConfigFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_rate: Option<f64>,
    pub links: Vec<String>,
    pub joints: Vec<JointSpec>,
    pub actuated: Vec<ActuatedSpec>,
    #[serde(default)]
    pub couplings: Vec<CouplingSpec>,
    pub fingers: BTreeMap<FingerId, FingerSpec>,
    #[serde(default)]
    pub contact_surfaces: Vec<ContactSpec>,
}

// ---------------------------------------------------------------------------
// Validated model

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingRule {
    Mirror { joint: String, source: String, ratio: f64 },
    Sequential { first: String, second: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ResolvedRule {
    Mirror {
        joint: usize,
        source: usize,
        ratio: f64,
    },
    Sequential {
        first: usize,
        second: usize,
        first_limits: [f64; 2],
        second_min: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actuator {
    pub name: String,
    /// Index of the joint in the tree's topological joint order.
    pub joint: usize,
    /// Range of valid commands. Wider than the joint limits for the leading
    /// joint of a sequential pair.
    pub bounds: [f64; 2],
    pub fixed: Option<f64>,
}

impl Actuator {
    /// Command used when nothing else is known: the fixed value, or zero
    /// clamped into range.
    pub fn default_command(&self) -> f64 {
        self.fixed.unwrap_or_else(|| 0.0_f64.clamp(self.bounds[0], self.bounds[1]))
    }

    pub fn is_free(&self) -> bool {
        self.fixed.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerAttachment {
    pub link: usize,
    pub chain: Vec<usize>,
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotFinger {
    /// Indices into [`RobotHandModel::actuators`], free commands only.
    pub commands: Vec<usize>,
    pub markers: [MarkerAttachment; 2],
    pub contact: Vec<(usize, Capsule)>,
}

/// Fingers that share at least one command are solved together.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerGroup {
    pub fingers: Vec<FingerId>,
    pub commands: Vec<usize>,
    /// Joints (topological indices) whose poses the group's markers depend on.
    pub joints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotHandModel {
    pub name: String,
    pub description: Option<String>,
    pub control_rate: Option<f64>,
    tree: KinematicTree,
    actuators: Vec<Actuator>,
    rules: Vec<ResolvedRule>,
    couplings: Vec<CouplingRule>,
    fingers: BTreeMap<FingerId, RobotFinger>,
    groups: Vec<FingerGroup>,
}

fn schema(msg: impl Into<String>) -> HandConfigError {
    HandConfigError::SchemaError(msg.into())
}

/// Parses and validates a hand-config TOML document.
pub fn load_hand_config(text: &str) -> Result<RobotHandModel, HandConfigError> {
    let file: HandConfigFile = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
    RobotHandModel::from_file(&file)
}

impl RobotHandModel {
    pub fn from_file(file: &HandConfigFile) -> Result<Self, HandConfigError> {
        if file.schema_version != HAND_SCHEMA_VERSION {
            return Err(schema(format!("unsupported schema_version {}", file.schema_version)));
        }
        let joints = file
            .joints
            .iter()
            .map(|j| {
                let origin = Transform::from(&j.origin);
                match j.kind {
                    JointType::Fixed => Ok(Joint::fixed(&j.name, &j.parent, &j.child, origin)),
                    JointType::Revolute => {
                        let axis = j.axis.ok_or_else(|| schema(format!("joint '{}' needs an axis", j.name)))?;
                        let limits = j
                            .limits
                            .ok_or_else(|| schema(format!("joint '{}' needs limits", j.name)))?;
                        Ok(Joint::revolute(&j.name, &j.parent, &j.child, origin, Vec3::from(axis), limits))
                    }
                }
            })
            .collect::<Result<Vec<_>, HandConfigError>>()?;
        let tree = KinematicTree::new(file.links.clone(), joints)?;

        let revolute = |name: &str| -> Result<usize, HandConfigError> {
            let idx = tree
                .joint_index(name)
                .ok_or_else(|| HandConfigError::DanglingReference(format!("joint '{name}'")))?;
            if !tree.joints()[idx].is_revolute() {
                return Err(schema(format!("joint '{name}' is fixed and cannot be actuated or coupled")));
            }
            Ok(idx)
        };

        // Couplings: every driven joint has exactly one rule.
        let mut driven: HashMap<usize, usize> = HashMap::new();
        let mut rules = Vec::new();
        for (r, spec) in file.couplings.iter().enumerate() {
            let rule = match spec {
                CouplingSpec::Mirror { joint, source, ratio } => {
                    let (j, s) = (revolute(joint)?, revolute(source)?);
                    if j == s {
                        return Err(HandConfigError::CouplingCycle(joint.clone()));
                    }
                    if !ratio.is_finite() {
                        return Err(schema(format!("coupling of '{joint}' has a non-finite ratio")));
                    }
                    ResolvedRule::Mirror {
                        joint: j,
                        source: s,
                        ratio: *ratio,
                    }
                }
                CouplingSpec::Sequential { first, second } => {
                    let (a, b) = (revolute(first)?, revolute(second)?);
                    if a == b {
                        return Err(HandConfigError::CouplingCycle(first.clone()));
                    }
                    let la = tree.joints()[a].limits().unwrap();
                    let lb = tree.joints()[b].limits().unwrap();
                    ResolvedRule::Sequential {
                        first: a,
                        second: b,
                        first_limits: la,
                        second_min: lb[0],
                    }
                }
            };
            let written = match rule {
                ResolvedRule::Mirror { joint, .. } => joint,
                ResolvedRule::Sequential { second, .. } => second,
            };
            if driven.insert(written, r).is_some() {
                return Err(schema(format!(
                    "joint '{}' is driven by more than one coupling",
                    tree.joints()[written].name
                )));
            }
            rules.push(rule);
        }

        let mut actuators = Vec::new();
        let mut actuator_index = HashMap::new();
        for a in &file.actuated {
            let j = revolute(&a.joint)?;
            if driven.contains_key(&j) {
                return Err(schema(format!("joint '{}' is both actuated and coupled", a.joint)));
            }
            if actuator_index.insert(j, actuators.len()).is_some() {
                return Err(schema(format!("joint '{}' listed twice in actuated", a.joint)));
            }
            let limits = tree.joints()[j].limits().unwrap();
            let mut bounds = limits;
            for rule in &rules {
                if let ResolvedRule::Sequential { first, second, .. } = rule {
                    if *first == j {
                        let lb = tree.joints()[*second].limits().unwrap();
                        bounds[1] = limits[1] + (lb[1] - lb[0]);
                    }
                }
            }
            if let Some(v) = a.fixed {
                if !(bounds[0] <= v && v <= bounds[1]) {
                    return Err(schema(format!("fixed value of '{}' is outside its limits", a.joint)));
                }
            }
            actuators.push(Actuator {
                name: a.joint.clone(),
                joint: j,
                bounds,
                fixed: a.fixed,
            });
        }
        for rule in &rules {
            if let ResolvedRule::Sequential { first, .. } = rule {
                if !actuator_index.contains_key(first) {
                    return Err(schema(format!(
                        "sequential coupling source '{}' must be actuated",
                        tree.joints()[*first].name
                    )));
                }
            }
        }
        for (j, joint) in tree.joints().iter().enumerate() {
            if joint.is_revolute() && !driven.contains_key(&j) && !actuator_index.contains_key(&j) {
                return Err(schema(format!(
                    "revolute joint '{}' is neither actuated nor coupled",
                    joint.name
                )));
            }
        }

        let rules = order_rules(&tree, rules, &driven)?;
        let couplings = rules
            .iter()
            .map(|r| match *r {
                ResolvedRule::Mirror { joint, source, ratio } => CouplingRule::Mirror {
                    joint: tree.joints()[joint].name.clone(),
                    source: tree.joints()[source].name.clone(),
                    ratio,
                },
                ResolvedRule::Sequential { first, second, .. } => CouplingRule::Sequential {
                    first: tree.joints()[first].name.clone(),
                    second: tree.joints()[second].name.clone(),
                },
            })
            .collect();

        let link = |name: &str| {
            tree.link_index(name)
                .ok_or_else(|| HandConfigError::DanglingReference(format!("link '{name}'")))
        };
        let mut fingers = BTreeMap::new();
        for (&finger, spec) in &file.fingers {
            if spec.markers.len() != 2 {
                return Err(schema(format!("finger {finger} needs exactly 2 markers (mid, tip)")));
            }
            let mut commands = Vec::new();
            for name in &spec.joints {
                let j = tree
                    .joint_index(name)
                    .ok_or_else(|| HandConfigError::DanglingReference(format!("joint '{name}'")))?;
                let &a = actuator_index
                    .get(&j)
                    .ok_or_else(|| schema(format!("finger {finger}: joint '{name}' is not actuated")))?;
                if actuators[a].is_free() && !commands.contains(&a) {
                    commands.push(a);
                }
            }
            let attach = |m: &MarkerSpec| -> Result<MarkerAttachment, HandConfigError> {
                let l = link(&m.link)?;
                Ok(MarkerAttachment {
                    link: l,
                    chain: tree.chain_to(l),
                    offset: Vec3::from(m.offset),
                })
            };
            let markers = [attach(&spec.markers[0])?, attach(&spec.markers[1])?];
            fingers.insert(
                finger,
                RobotFinger {
                    commands,
                    markers,
                    contact: Vec::new(),
                },
            );
        }
        for c in &file.contact_surfaces {
            let l = link(&c.link)?;
            if !(c.radius > 0.0) {
                return Err(schema(format!("contact surface on '{}' needs a positive radius", c.link)));
            }
            let f = fingers
                .get_mut(&c.finger)
                .ok_or_else(|| HandConfigError::DanglingReference(format!("finger {}", c.finger)))?;
            f.contact.push((
                l,
                Capsule {
                    start: Vec3::from(c.from),
                    end: Vec3::from(c.to),
                    radius: c.radius,
                    palmar: c.palmar.map(Vec3::from).unwrap_or_else(Vec3::z),
                },
            ));
        }

        let mut model = RobotHandModel {
            name: file.name.clone(),
            description: file.description.clone(),
            control_rate: file.control_rate,
            tree,
            actuators,
            rules,
            couplings,
            fingers,
            groups: Vec::new(),
        };
        model.groups = model.build_groups();
        Ok(model)
    }

    fn build_groups(&self) -> Vec<FingerGroup> {
        let ids: Vec<FingerId> = self.fingers.keys().copied().collect();
        let mut group_of: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                let ca = &self.fingers[&ids[a]].commands;
                if self.fingers[&ids[b]].commands.iter().any(|c| ca.contains(c)) {
                    let (ra, rb) = (find(&mut group_of, a), find(&mut group_of, b));
                    group_of[rb.max(ra)] = ra.min(rb);
                }
            }
        }
        let mut groups: BTreeMap<usize, FingerGroup> = BTreeMap::new();
        for (i, &f) in ids.iter().enumerate() {
            let root = find(&mut group_of, i);
            let g = groups.entry(root).or_insert_with(|| FingerGroup {
                fingers: Vec::new(),
                commands: Vec::new(),
                joints: Vec::new(),
            });
            g.fingers.push(f);
            let finger = &self.fingers[&f];
            g.commands.extend(finger.commands.iter().copied());
            for m in &finger.markers {
                g.joints.extend(m.chain.iter().copied());
            }
        }
        groups
            .into_values()
            .map(|mut g| {
                g.commands.sort_unstable();
                g.commands.dedup();
                g.joints.sort_unstable();
                g.joints.dedup();
                g
            })
            .collect()
    }

    pub fn tree(&self) -> &KinematicTree {
        &self.tree
    }

    pub fn actuators(&self) -> &[Actuator] {
        &self.actuators
    }

    pub fn couplings(&self) -> &[CouplingRule] {
        &self.couplings
    }

    pub fn fingers(&self) -> &BTreeMap<FingerId, RobotFinger> {
        &self.fingers
    }

    pub fn finger(&self, f: FingerId) -> Option<&RobotFinger> {
        self.fingers.get(&f)
    }

    pub fn groups(&self) -> &[FingerGroup] {
        &self.groups
    }

    /// Actuators that are optimized (not locked).
    pub fn free_actuators(&self) -> impl Iterator<Item = &Actuator> {
        self.actuators.iter().filter(|a| a.is_free())
    }

    pub fn default_commands(&self) -> Vec<f64> {
        self.actuators.iter().map(Actuator::default_command).collect()
    }

    /// Resolves a full command vector (one entry per actuator) into joint
    /// values indexed like the tree's joints.
    pub fn resolve_into(&self, commands: &[f64], joints: &mut [f64]) {
        for (a, &c) in self.actuators.iter().zip(commands) {
            joints[a.joint] = c;
        }
        for rule in &self.rules {
            match *rule {
                ResolvedRule::Mirror { joint, source, ratio } => joints[joint] = joints[source] * ratio,
                ResolvedRule::Sequential {
                    first,
                    second,
                    first_limits,
                    second_min,
                } => {
                    let c = joints[first];
                    joints[first] = c.clamp(first_limits[0], first_limits[1]);
                    joints[second] = second_min + (c - first_limits[1]).max(0.0);
                }
            }
        }
    }

    pub fn resolve(&self, commands: &[f64]) -> Vec<f64> {
        let mut joints = vec![0.0; self.tree.joints().len()];
        self.resolve_into(commands, &mut joints);
        joints
    }

    /// Position of a marker in the hand base frame.
    pub fn marker_position(&self, marker: &MarkerAttachment, joints: &[f64]) -> Vec3 {
        self.tree
            .link_pose_indexed(&marker.chain, joints)
            .transform_point(&marker.offset)
    }

    /// Commands keyed by actuator name, including locked ones.
    pub fn commands_to_values(&self, commands: &[f64]) -> JointValues {
        self.actuators
            .iter()
            .zip(commands)
            .map(|(a, &c)| (a.name.clone(), c))
            .collect()
    }

    /// Commands ordered like [`Self::actuators`] from named values; missing
    /// entries take the default command.
    pub fn commands_from_values(&self, values: &JointValues) -> Result<Vec<f64>, HandConfigError> {
        for name in values.0.keys() {
            if !self.actuators.iter().any(|a| &a.name == name) {
                return Err(HandConfigError::DanglingReference(format!("actuated joint '{name}'")));
            }
        }
        Ok(self
            .actuators
            .iter()
            .map(|a| values.get(&a.name).unwrap_or_else(|| a.default_command()))
            .collect())
    }

    /// Recovers commands from fully resolved joint values. Inverse of
    /// coupling for the modeled rules.
    pub fn commands_from_joints(&self, joints: &JointValues) -> Result<JointValues, HandConfigError> {
        let mut out = JointValues::new();
        for a in &self.actuators {
            let name = &a.name;
            let mut v = joints
                .get(name)
                .ok_or_else(|| HandConfigError::DanglingReference(format!("joint '{name}'")))?;
            for rule in &self.rules {
                if let ResolvedRule::Sequential { first, second, second_min, .. } = *rule {
                    if first == a.joint {
                        let second_name = &self.tree.joints()[second].name;
                        let q2 = joints.get(second_name).ok_or_else(|| {
                            HandConfigError::DanglingReference(format!("joint '{second_name}'"))
                        })?;
                        v += q2 - second_min;
                    }
                }
            }
            out.set(name, v);
        }
        Ok(out)
    }

    /// Contact surface of one finger in the hand base frame.
    pub fn contact_mesh(
        &self,
        finger: FingerId,
        joints: &[f64],
        segments: usize,
        contact_only: bool,
    ) -> Result<Option<TriangleMesh>, MeshError> {
        let Some(f) = self.fingers.get(&finger) else {
            return Ok(None);
        };
        if f.contact.is_empty() {
            return Ok(None);
        }
        let poses = self.tree.forward_kinematics_indexed(joints);
        let mut out = TriangleMesh::default();
        for (link, cap) in &f.contact {
            let pose = &poses[*link];
            let world = Capsule {
                start: pose.transform_point(&cap.start),
                end: pose.transform_point(&cap.end),
                radius: cap.radius,
                palmar: pose.transform_vector(&cap.palmar),
            };
            out.merge(&world.mesh(segments, contact_only)?);
        }
        Ok(Some(out))
    }
}

/// Orders rules so that every rule runs after the rule producing its input.
fn order_rules(
    tree: &KinematicTree,
    rules: Vec<ResolvedRule>,
    driven: &HashMap<usize, usize>,
) -> Result<Vec<ResolvedRule>, HandConfigError> {
    let reads = |r: &ResolvedRule| match *r {
        ResolvedRule::Mirror { source, .. } => source,
        ResolvedRule::Sequential { first, .. } => first,
    };
    // Mirror rules that read the leading joint of a sequential pair must run
    // after that pair resolves it.
    let mut sequential_of: HashMap<usize, usize> = HashMap::new();
    for (i, r) in rules.iter().enumerate() {
        if let ResolvedRule::Sequential { first, .. } = r {
            sequential_of.insert(*first, i);
        }
    }
    let deps: Vec<Option<usize>> = rules
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let src = reads(r);
            driven
                .get(&src)
                .copied()
                .or_else(|| sequential_of.get(&src).copied().filter(|&s| s != i))
        })
        .collect();
    let mut state = vec![0u8; rules.len()]; // 0 new, 1 visiting, 2 done
    let mut order = Vec::with_capacity(rules.len());
    fn visit(
        i: usize,
        deps: &[Option<usize>],
        state: &mut [u8],
        order: &mut Vec<usize>,
    ) -> Result<(), usize> {
        match state[i] {
            2 => return Ok(()),
            1 => return Err(i),
            _ => {}
        }
        state[i] = 1;
        if let Some(d) = deps[i] {
            visit(d, deps, state, order)?;
        }
        state[i] = 2;
        order.push(i);
        Ok(())
    }
    for i in 0..rules.len() {
        visit(i, &deps, &mut state, &mut order).map_err(|r| {
            let j = match rules[r] {
                ResolvedRule::Mirror { joint, .. } => joint,
                ResolvedRule::Sequential { second, .. } => second,
            };
            HandConfigError::CouplingCycle(tree.joints()[j].name.clone())
        })?;
    }
    Ok(order.into_iter().map(|i| rules[i]).collect())
}

/// Outcome of [`apply_coupling`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledJoints {
    pub values: JointValues,
    /// Actuated joints whose command was outside its range and got clamped.
    pub clamped: Vec<String>,
}

/// Resolves every joint from actuated commands. Out-of-range commands are
/// clamped and reported; locked joints always take their fixed value.
pub fn apply_coupling(model: &RobotHandModel, actuated: &JointValues) -> Result<CoupledJoints, HandConfigError> {
    let mut commands = Vec::with_capacity(model.actuators.len());
    let mut clamped = Vec::new();
    for a in &model.actuators {
        let c = actuated
            .get(&a.name)
            .ok_or_else(|| schema(format!("missing command for actuated joint '{}'", a.name)))?;
        let c = match a.fixed {
            Some(v) => v,
            None => {
                let bounded = c.clamp(a.bounds[0], a.bounds[1]);
                if bounded != c {
                    clamped.push(a.name.clone());
                }
                bounded
            }
        };
        commands.push(c);
    }
    for name in actuated.0.keys() {
        if !model.actuators.iter().any(|a| &a.name == name) {
            return Err(HandConfigError::DanglingReference(format!("actuated joint '{name}'")));
        }
    }
    let joints = model.resolve(&commands);
    let values = model
        .tree
        .joints()
        .iter()
        .zip(&joints)
        .filter(|(j, _)| j.is_revolute())
        .map(|(j, &v)| (j.name.clone(), v))
        .collect();
    Ok(CoupledJoints { values, clamped })
}

/// Mid and tip marker points of `finger` for the finger's commands `r`
/// (ordered like [`RobotFinger::commands`]); other actuators take their
/// default commands.
pub fn finger_marker_points(
    model: &RobotHandModel,
    finger: FingerId,
    r: &[f64],
) -> Result<(Vec3, Vec3), HandConfigError> {
    let f = model
        .finger(finger)
        .ok_or_else(|| HandConfigError::DanglingReference(format!("finger {finger}")))?;
    if r.len() != f.commands.len() {
        return Err(schema(format!(
            "finger {finger} takes {} commands, got {}",
            f.commands.len(),
            r.len()
        )));
    }
    let mut commands = model.default_commands();
    for (&a, &v) in f.commands.iter().zip(r) {
        commands[a] = v;
    }
    let joints = model.resolve(&commands);
    Ok((
        model.marker_position(&f.markers[0], &joints),
        model.marker_position(&f.markers[1], &joints),
    ))
}

/// A robot hand with the intermediate hand model's kinematics: nine actuated
/// revolute joints per finger, markers and contact capsules at the same
/// places. Used as a self-embodiment reference.
pub fn clone_from_shape(shape: &HandShape) -> HandConfigFile {
    let mut links = vec!["palm".to_string()];
    let mut joints = Vec::new();
    let mut actuated = Vec::new();
    let mut fingers = BTreeMap::new();
    let mut contact_surfaces = Vec::new();
    const AXES: [([f64; 3], &str); 3] = [([1.0, 0.0, 0.0], "flex"), ([0.0, 0.0, 1.0], "abd"), ([0.0, 1.0, 0.0], "twist")];
    for f in FingerId::ALL {
        let g = shape.geometry(f);
        let (q_min, q_max) = shape.bounds(f);
        let root = format!("{f}_root");
        links.push(root.clone());
        let rpy = {
            let r = nalgebra::Rotation3::from_matrix_unchecked(g.base.rotation);
            let (roll, pitch, yaw) = r.euler_angles();
            [roll, pitch, yaw]
        };
        joints.push(JointSpec {
            name: format!("{f}_base"),
            parent: "palm".into(),
            child: root.clone(),
            origin: Origin {
                xyz: [g.base.translation.x, g.base.translation.y, g.base.translation.z],
                rpy,
            },
            kind: JointType::Fixed,
            axis: None,
            limits: None,
        });
        let mut parent = root;
        let mut names = Vec::new();
        for s in 0..SEGMENTS {
            for (k, (axis, label)) in AXES.iter().enumerate() {
                let idx = 3 * s + k;
                let child = if k == 2 {
                    format!("{f}_segment{s}")
                } else {
                    format!("{f}_segment{s}_{label}")
                };
                let name = format!("{f}_{s}_{label}");
                let xyz = if k == 0 && s > 0 { [0.0, g.lengths[s - 1], 0.0] } else { [0.0; 3] };
                joints.push(JointSpec {
                    name: name.clone(),
                    parent: parent.clone(),
                    child: child.clone(),
                    origin: Origin { xyz, rpy: [0.0; 3] },
                    kind: JointType::Revolute,
                    axis: Some(*axis),
                    limits: Some([q_min[idx], q_max[idx]]),
                });
                links.push(child.clone());
                actuated.push(ActuatedSpec {
                    joint: name.clone(),
                    fixed: None,
                });
                names.push(name);
                parent = child;
            }
            contact_surfaces.push(ContactSpec {
                finger: f,
                link: format!("{f}_segment{s}"),
                from: [0.0; 3],
                to: [0.0, g.lengths[s], 0.0],
                radius: g.radii[s],
                palmar: Some([0.0, 0.0, 1.0]),
            });
        }
        debug_assert_eq!(names.len(), FINGER_DOF);
        let markers = (0..2)
            .map(|m| {
                let p = g.marker_local(m);
                MarkerSpec {
                    link: format!("{f}_segment{}", g.markers[m].segment),
                    offset: [p.x, p.y, p.z],
                }
            })
            .collect();
        fingers.insert(f, FingerSpec { joints: names, markers });
    }
    HandConfigFile {
        schema_version: HAND_SCHEMA_VERSION,
        name: "clone".into(),
        description: Some("Robot hand with the intermediate hand model's kinematics".into()),
        control_rate: None,
        links,
        joints,
        actuated,
        couplings: Vec::new(),
        fingers,
        contact_surfaces,
    }
}

/// Set of fingers the model maps.
pub fn mapped_fingers(model: &RobotHandModel) -> BTreeSet<FingerId> {
    model.fingers.keys().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shipped;

    #[test]
    fn mia_actuation() {
        let mia = shipped::mia_hand();
        assert_eq!(mia.actuators().len(), 4);
        let free: Vec<&str> = mia.free_actuators().map(|a| a.name.as_str()).collect();
        assert_eq!(free.len(), 3);
        let fixed: Vec<&Actuator> = mia.actuators().iter().filter(|a| !a.is_free()).collect();
        assert_eq!(fixed.len(), 1);
        assert_eq!(fixed[0].name, "thumb_opposition");
    }

    #[test]
    fn shadow_actuation() {
        let shadow = shipped::shadow_hand();
        assert_eq!(shadow.tree().revolute_joints().count(), 24);
        assert_eq!(shadow.actuators().len(), 20);
    }

    #[test]
    fn mia_mirror_coupling() {
        let mia = shipped::mia_hand();
        let mut cmd = mia.commands_to_values(&mia.default_commands());
        cmd.set("mrl_flexion", 0.8);
        let out = apply_coupling(&mia, &cmd).unwrap();
        for j in ["mrl_flexion", "ring_flexion", "little_flexion"] {
            assert_eq!(out.values.get(j), Some(0.8), "{j}");
        }
        assert!(out.clamped.is_empty());
    }

    #[test]
    fn shadow_sequential_coupling() {
        let shadow = shipped::shadow_hand();
        let mut cmd = shadow.commands_to_values(&shadow.default_commands());
        cmd.set("FFJ2", 2.0);
        let out = apply_coupling(&shadow, &cmd).unwrap();
        assert_eq!(out.values.get("FFJ2"), Some(1.571));
        assert!((out.values.get("FFJ1").unwrap() - 0.429).abs() < 1e-12);
        cmd.set("FFJ2", 1.0);
        let out = apply_coupling(&shadow, &cmd).unwrap();
        assert_eq!(out.values.get("FFJ2"), Some(1.0));
        assert_eq!(out.values.get("FFJ1"), Some(0.0));
    }

    #[test]
    fn out_of_range_commands_are_clamped_and_flagged() {
        let mia = shipped::mia_hand();
        let mut cmd = mia.commands_to_values(&mia.default_commands());
        cmd.set("index_flexion", 9.0);
        let out = apply_coupling(&mia, &cmd).unwrap();
        assert_eq!(out.clamped, vec!["index_flexion".to_string()]);
        let hi = mia.actuators().iter().find(|a| a.name == "index_flexion").unwrap().bounds[1];
        assert_eq!(out.values.get("index_flexion"), Some(hi));
    }

    const MINI: &str = r#"
schema_version = 1
name = "mini"
links = ["base", "a", "b"]
actuated = [{ joint = "j1" }]
couplings = [{ kind = "mirror", joint = "j2", source = "j1", ratio = 0.5 }]

[[joints]]
name = "j1"
parent = "base"
child = "a"
type = "revolute"
axis = [1.0, 0.0, 0.0]
limits = [0.0, 1.0]

[[joints]]
name = "j2"
parent = "a"
child = "b"
type = "revolute"
origin = { xyz = [0.0, 0.05, 0.0] }
axis = [1.0, 0.0, 0.0]
limits = [0.0, 1.0]

[fingers.index]
joints = ["j1"]
markers = [{ link = "a", offset = [0.0, 0.02, 0.0] }, { link = "b", offset = [0.0, 0.03, 0.0] }]
"#;

    #[test]
    fn minimal_config_loads() {
        let m = load_hand_config(MINI).unwrap();
        assert_eq!(m.groups().len(), 1);
        let (p1, p2) = finger_marker_points(&m, FingerId::Index, &[0.0]).unwrap();
        assert!((p1 - Vec3::new(0.0, 0.02, 0.0)).norm() < 1e-15);
        assert!((p2 - Vec3::new(0.0, 0.08, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dangling_link_rejected() {
        let bad = MINI.replace("child = \"b\"", "child = \"ghost\"");
        assert!(matches!(load_hand_config(&bad), Err(HandConfigError::DanglingReference(_))));
        let bad = MINI.replace("{ link = \"b\"", "{ link = \"nowhere\"");
        assert!(matches!(load_hand_config(&bad), Err(HandConfigError::DanglingReference(_))));
    }

    #[test]
    fn coupling_cycle_rejected() {
        let cyclic = MINI.replace(
            "actuated = [{ joint = \"j1\" }]\ncouplings = [{ kind = \"mirror\", joint = \"j2\", source = \"j1\", ratio = 0.5 }]",
            "actuated = []\ncouplings = [{ kind = \"mirror\", joint = \"j2\", source = \"j1\", ratio = 0.5 }, { kind = \"mirror\", joint = \"j1\", source = \"j2\", ratio = 2.0 }]",
        )
        .replace("joints = [\"j1\"]", "joints = []");
        assert!(matches!(load_hand_config(&cyclic), Err(HandConfigError::CouplingCycle(_))));
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(load_hand_config("name = 3"), Err(HandConfigError::SchemaError(_))));
        let v2 = MINI.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(load_hand_config(&v2), Err(HandConfigError::SchemaError(_))));
        let unactuated = MINI.replace("actuated = [{ joint = \"j1\" }]", "actuated = []");
        assert!(matches!(load_hand_config(&unactuated), Err(HandConfigError::SchemaError(_))));
        let one_marker = MINI.replace(", { link = \"b\", offset = [0.0, 0.03, 0.0] }", "");
        assert!(matches!(load_hand_config(&one_marker), Err(HandConfigError::SchemaError(_))));
    }

    #[test]
    fn sequential_commands_invert() {
        let shadow = shipped::shadow_hand();
        let mut cmd = shadow.commands_to_values(&shadow.default_commands());
        cmd.set("MFJ2", 2.5);
        cmd.set("LFJ2", 0.7);
        let once = apply_coupling(&shadow, &cmd).unwrap().values;
        let recovered = shadow.commands_from_joints(&once).unwrap();
        assert_eq!(recovered.get("MFJ2"), Some(2.5));
        let twice = apply_coupling(&shadow, &recovered).unwrap().values;
        assert_eq!(once, twice);
    }

    #[test]
    fn clone_round_trips_through_toml() {
        let shape = shipped::hand_shape();
        let file = clone_from_shape(&shape);
        let text = toml::to_string(&file).unwrap();
        let model = load_hand_config(&text).unwrap();
        assert_eq!(model.actuators().len(), 45);
        assert_eq!(model.groups().len(), 5);
    }
}
