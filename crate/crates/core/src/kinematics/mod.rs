//! Forward kinematics, finite-difference Jacobians, damped least-squares IK
//! and hand-to-robot retargeting.

mod fk;
mod ik;
mod jacobian;
mod retarget;

use thiserror::Error;

use crate::scene::KinematicTree;

pub use fk::{forward_kinematics, forward_kinematics_with, FkLayout, Kinematics};
pub use ik::{solve_ik, IkOptions, IkSolution, IkSolver, WeldTarget};
pub use jacobian::{jacobian, site_jacobian, FD_STEP};
pub use retarget::{calibrate_scale, retarget, Binding, HandFrame, Landmark, RetargetMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("DimensionMismatch: expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("UnknownSite '{0}'")]
    UnknownSite(String),
    #[error("NoTargets: IK needs at least one weld target")]
    NoTargets,
    #[error("NonFiniteResidual: solver diverged")]
    NonFiniteResidual,
    #[error("DegenerateHand: mean wrist-to-fingertip distance below 1e-4 m")]
    DegenerateHand,
    #[error("calibration needs at least 2 fingertip bindings, found {0}")]
    TooFewBindings(usize),
    #[error("calibration needs a wrist binding")]
    MissingWristBinding,
    #[error("invalid weld weights for site '{0}'")]
    InvalidWeights(String),
    #[error("invalid retarget map: {0}")]
    InvalidMap(String),
}

/// Generalized coordinates, one value per hinge/slide joint in tree order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn zeros(tree: &KinematicTree) -> Self {
        let mut q = JointConfig(vec![0.0; tree.dof()]);
        q.clamp_to(tree);
        q
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn check(&self, tree: &KinematicTree) -> Result<(), KinematicsError> {
        let expected = tree.dof();
        if self.0.len() != expected {
            return Err(KinematicsError::DimensionMismatch {
                expected,
                got: self.0.len(),
            });
        }
        Ok(())
    }

    pub fn clamp_to(&mut self, tree: &KinematicTree) {
        for (v, (_, j)) in self.0.iter_mut().zip(tree.dof_joints()) {
            *v = j.clamp(*v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}
