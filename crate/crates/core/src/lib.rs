//! Hand-motion retargeting: motion-capture glove markers are fitted to a
//! parametric human hand model (record mapping), and hand-model states are
//! mapped to joint commands of robot hands (embodiment mapping).

pub mod api;
pub mod boxopt;
pub mod config;
pub mod embodiment;
pub mod hand_model;
pub mod kinematics;
pub mod mesh;
pub mod metrics;
pub mod mocap;
pub mod pipeline;
pub mod record;
pub mod robot_hands;
pub mod se3;
pub mod shipped;
pub mod synth;
pub mod trajectory;
