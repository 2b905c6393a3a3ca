//! Kinematic trees and forward kinematics.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::se3::{axis_angle_matrix, Transform, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("no value given for joint '{0}'")]
    MissingJointValue(String),
    #[error("unknown joint '{0}'")]
    UnknownJoint(String),
    #[error("reference to undefined link '{0}'")]
    DanglingReference(String),
    #[error("link/joint graph is not a tree: {0}")]
    NotATree(String),
    #[error("joint '{0}': revolute axis must have unit norm")]
    InvalidAxis(String),
    #[error("joint '{0}': limits must satisfy min <= max")]
    InvalidLimits(String),
    #[error("duplicate name '{0}'")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointKind {
    Revolute { axis: Vec3, limits: [f64; 2] },
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub origin: Transform,
    pub kind: JointKind,
}

impl Joint {
    pub fn revolute(name: &str, parent: &str, child: &str, origin: Transform, axis: Vec3, limits: [f64; 2]) -> Self {
        Joint {
            name: name.into(),
            parent: parent.into(),
            child: child.into(),
            origin,
            kind: JointKind::Revolute { axis, limits },
        }
    }

    pub fn fixed(name: &str, parent: &str, child: &str, origin: Transform) -> Self {
        Joint {
            name: name.into(),
            parent: parent.into(),
            child: child.into(),
            origin,
            kind: JointKind::Fixed,
        }
    }

    pub fn is_revolute(&self) -> bool {
        matches!(self.kind, JointKind::Revolute { .. })
    }

    pub fn limits(&self) -> Option<[f64; 2]> {
        match self.kind {
            JointKind::Revolute { limits, .. } => Some(limits),
            JointKind::Fixed => None,
        }
    }

    /// Pose of the child link in the parent link frame at angle `q`.
    pub fn local_transform(&self, q: f64) -> Transform {
        match self.kind {
            JointKind::Revolute { axis, .. } => {
                self.origin.compose(&Transform::from_rotation(axis_angle_matrix(&axis, q)))
            }
            JointKind::Fixed => self.origin,
        }
    }
}

/// Joint angles by joint name, in radians.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointValues(pub BTreeMap<String, f64>);

impl JointValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, joint: &str) -> Option<f64> {
        self.0.get(joint).copied()
    }

    pub fn set(&mut self, joint: &str, value: f64) {
        self.0.insert(joint.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.0.iter()
    }
}

impl FromIterator<(String, f64)> for JointValues {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        JointValues(iter.into_iter().collect())
    }
}

/// A validated tree of links connected by joints.
///
/// Joints are kept in topological order (every joint after the joint that
/// creates its parent link), so forward kinematics is a single pass.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    links: Vec<String>,
    joints: Vec<Joint>,
    root: usize,
    link_index: HashMap<String, usize>,
    joint_index: HashMap<String, usize>,
    /// For each link, the index of the joint whose child it is.
    parent_joint: Vec<Option<usize>>,
    /// For each joint (topological order), the index of its parent link.
    joint_parent_link: Vec<usize>,
    joint_child_link: Vec<usize>,
}

const AXIS_TOLERANCE: f64 = 1e-9;

impl KinematicTree {
    pub fn new(links: Vec<String>, joints: Vec<Joint>) -> Result<Self, KinematicsError> {
        let mut link_index = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.clone(), i).is_some() {
                return Err(KinematicsError::Duplicate(l.clone()));
            }
        }
        let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
        let mut seen_joint_names = HashMap::new();
        for (j, joint) in joints.iter().enumerate() {
            if seen_joint_names.insert(joint.name.clone(), j).is_some() {
                return Err(KinematicsError::Duplicate(joint.name.clone()));
            }
            for l in [&joint.parent, &joint.child] {
                if !link_index.contains_key(l) {
                    return Err(KinematicsError::DanglingReference(l.clone()));
                }
            }
            if let JointKind::Revolute { axis, limits } = joint.kind {
                if (axis.norm() - 1.0).abs() > AXIS_TOLERANCE {
                    return Err(KinematicsError::InvalidAxis(joint.name.clone()));
                }
                if !(limits[0] <= limits[1]) {
                    return Err(KinematicsError::InvalidLimits(joint.name.clone()));
                }
            }
            let child = link_index[&joint.child];
            if parent_joint[child].replace(j).is_some() {
                return Err(KinematicsError::NotATree(format!(
                    "link '{}' has more than one parent joint",
                    joint.child
                )));
            }
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&l| parent_joint[l].is_none()).collect();
        if roots.len() != 1 {
            return Err(KinematicsError::NotATree(format!("expected one root link, found {}", roots.len())));
        }
        let root = roots[0];

        // Topological order by breadth-first expansion from the root. Joints
        // never reached belong to a cycle.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for (j, joint) in joints.iter().enumerate() {
            children[link_index[&joint.parent]].push(j);
        }
        let mut order = Vec::with_capacity(joints.len());
        let mut frontier = vec![root];
        while let Some(link) = frontier.pop() {
            for &j in children[link].iter().rev() {
                order.push(j);
                frontier.push(link_index[&joints[j].child]);
            }
        }
        if order.len() != joints.len() {
            return Err(KinematicsError::NotATree("cycle detected".into()));
        }
        // A stable order keeps output deterministic and readable.
        let joints: Vec<Joint> = order.iter().map(|&j| joints[j].clone()).collect();
        let joint_index: HashMap<String, usize> =
            joints.iter().enumerate().map(|(i, j)| (j.name.clone(), i)).collect();
        let mut parent_joint = vec![None; links.len()];
        for (i, j) in joints.iter().enumerate() {
            parent_joint[link_index[&j.child]] = Some(i);
        }
        let joint_parent_link = joints.iter().map(|j| link_index[&j.parent]).collect();
        let joint_child_link = joints.iter().map(|j| link_index[&j.child]).collect();
        Ok(KinematicTree {
            links,
            joints,
            root,
            link_index,
            joint_index,
            parent_joint,
            joint_parent_link,
            joint_child_link,
        })
    }

    pub fn links(&self) -> &[String] {
        &self.links
    }

    /// Joints in topological order.
    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn root(&self) -> &str {
        &self.links[self.root]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_index.get(name).copied()
    }

    pub fn joint(&self, name: &str) -> Option<&Joint> {
        self.joint_index(name).map(|i| &self.joints[i])
    }

    pub fn revolute_joints(&self) -> impl Iterator<Item = &Joint> {
        self.joints.iter().filter(|j| j.is_revolute())
    }

    /// Joint indices on the path from the root to `link`, root first.
    pub fn chain_to(&self, link: usize) -> Vec<usize> {
        let mut chain = Vec::new();
        let mut current = link;
        while let Some(j) = self.parent_joint[current] {
            chain.push(j);
            current = self.joint_parent_link[j];
        }
        chain.reverse();
        chain
    }

    /// Forward kinematics over joint values indexed like [`Self::joints`].
    /// Returns link poses indexed like [`Self::links`].
    pub fn forward_kinematics_indexed(&self, q: &[f64]) -> Vec<Transform> {
        let mut poses = vec![Transform::identity(); self.links.len()];
        for (j, joint) in self.joints.iter().enumerate() {
            let parent = poses[self.joint_parent_link[j]];
            poses[self.joint_child_link[j]] = parent.compose(&joint.local_transform(q[j]));
        }
        poses
    }

    /// Pose of `link` in the root frame, visiting only the joints on its chain.
    pub fn link_pose_indexed(&self, chain: &[usize], q: &[f64]) -> Transform {
        chain
            .iter()
            .fold(Transform::identity(), |acc, &j| acc.compose(&self.joints[j].local_transform(q[j])))
    }

    /// Dense joint vector from named values; fixed joints get zero.
    pub fn dense_values(&self, q: &JointValues) -> Result<Vec<f64>, KinematicsError> {
        for name in q.0.keys() {
            if !self.joint_index.contains_key(name) {
                return Err(KinematicsError::UnknownJoint(name.clone()));
            }
        }
        self.joints
            .iter()
            .map(|j| match j.kind {
                JointKind::Fixed => Ok(q.get(&j.name).unwrap_or(0.0)),
                JointKind::Revolute { .. } => {
                    q.get(&j.name).ok_or_else(|| KinematicsError::MissingJointValue(j.name.clone()))
                }
            })
            .collect()
    }

    /// Pose of every link in the root frame.
    pub fn forward_kinematics(&self, q: &JointValues) -> Result<BTreeMap<String, Transform>, KinematicsError> {
        let dense = self.dense_values(q)?;
        let poses = self.forward_kinematics_indexed(&dense);
        Ok(self.links.iter().cloned().zip(poses).collect())
    }
}
