//! At-a-distance gripper control.
//!
//! The operator selects a mocap site, then closes the lower three fingers
//! to engage it. While engaged, hand motion relative to the pose at
//! activation is replayed on the gripper in the gripper's own frame, so
//! tracking error does not grow with the distance to the robot.

use thiserror::Error;

use crate::kinematics::HandFrame;
use crate::scene::KinematicTree;
use crate::se3::Pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HitchhikeError {
    #[error("UnknownSite '{0}'")]
    UnknownSite(String),
    #[error("gesture thresholds must satisfy 0 <= release < engage <= 1")]
    InvalidThresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub site: String,
    /// Hand pose at activation.
    pub hand0: Pose,
    /// Gripper (site) pose at activation.
    pub grip0: Pose,
    pub engaged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GestureParams {
    pub engage_threshold: f64,
    pub release_threshold: f64,
}

impl Default for GestureParams {
    fn default() -> Self {
        Self {
            engage_threshold: 0.7,
            release_threshold: 0.3,
        }
    }
}

impl GestureParams {
    pub fn new(engage_threshold: f64, release_threshold: f64) -> Result<Self, HitchhikeError> {
        let p = Self {
            engage_threshold,
            release_threshold,
        };
        if 0.0 <= release_threshold && release_threshold < engage_threshold && engage_threshold <= 1.0 {
            Ok(p)
        } else {
            Err(HitchhikeError::InvalidThresholds)
        }
    }
}

pub fn activate(
    tree: &KinematicTree,
    site: &str,
    hand: Pose,
    grip: Pose,
) -> Result<Anchor, HitchhikeError> {
    if tree.site_index(site).is_none() {
        return Err(HitchhikeError::UnknownSite(site.to_string()));
    }
    Ok(Anchor {
        site: site.to_string(),
        hand0: hand,
        grip0: grip,
        engaged: false,
    })
}

/// Grasp gesture with hysteresis on the mean curl of middle, ring and pinky.
pub fn gesture_state(prev_engaged: bool, hand: &HandFrame, params: &GestureParams) -> bool {
    let c = (hand.curl[2] + hand.curl[3] + hand.curl[4]) / 3.0;
    if c >= params.engage_threshold {
        true
    } else if c <= params.release_threshold {
        false
    } else {
        prev_engaged
    }
}

/// New gripper target: `grip0 ∘ (hand0⁻¹ ∘ hand_now)`, or `grip0` while
/// disengaged.
pub fn apply_delta(anchor: &Anchor, hand_now: &Pose) -> Pose {
    if !anchor.engaged {
        return anchor.grip0;
    }
    let delta = anchor.hand0.inverse().compose(hand_now);
    anchor.grip0.compose(&delta)
}

/// Per-session controller holding at most one active anchor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hitchhiker {
    pub anchor: Option<Anchor>,
    pub params: GestureParams,
}

impl Hitchhiker {
    pub fn new(params: GestureParams) -> Self {
        Self {
            anchor: None,
            params,
        }
    }

    /// Replace any existing anchor.
    pub fn select(
        &mut self,
        tree: &KinematicTree,
        site: &str,
        hand: Pose,
        grip: Pose,
    ) -> Result<&Anchor, HitchhikeError> {
        let anchor = activate(tree, site, hand, grip)?;
        Ok(self.anchor.insert(anchor))
    }

    pub fn engaged(&self) -> bool {
        self.anchor.as_ref().is_some_and(|a| a.engaged)
    }

    /// Update the gesture state; returns `(was_engaged, now_engaged)`.
    pub fn update_gesture(&mut self, hand: &HandFrame) -> (bool, bool) {
        let params = self.params;
        match self.anchor.as_mut() {
            Some(a) => {
                let before = a.engaged;
                a.engaged = gesture_state(before, hand, &params);
                (before, a.engaged)
            }
            None => (false, false),
        }
    }

    /// Gripper target for the current hand pose, if an anchor is engaged.
    pub fn target(&self, hand_now: &Pose) -> Option<(&str, Pose)> {
        self.anchor
            .as_ref()
            .filter(|a| a.engaged)
            .map(|a| (a.site.as_str(), apply_delta(a, hand_now)))
    }

    pub fn clear(&mut self) {
        self.anchor = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::parse_mjcf;
    use nalgebra::Vector3;
    use std::f64::consts::FRAC_PI_2;

    fn tree() -> KinematicTree {
        parse_mjcf(
            r#"<mujoco><worldbody><body name="g"><site name="grip"/><site name="other"/></body>
               </worldbody></mujoco>"#,
        )
        .unwrap()
    }

    fn hand(curl: [f64; 5]) -> HandFrame {
        HandFrame {
            wrist: Pose::identity(),
            fingertips: [Pose::identity(); 5],
            curl,
        }
    }

    #[test]
    fn activation() {
        let t = tree();
        let grip = Pose::from_translation(2.0, 0.0, 0.0);
        let mut a = activate(&t, "grip", Pose::identity(), grip).unwrap();
        assert!(!a.engaged);
        a.engaged = true;
        assert_eq!(apply_delta(&a, &Pose::identity()), grip);
        assert_eq!(
            activate(&t, "nope", Pose::identity(), grip),
            Err(HitchhikeError::UnknownSite("nope".into()))
        );
    }

    #[test]
    fn reselect_replaces_anchor() {
        let t = tree();
        let mut h = Hitchhiker::default();
        h.select(&t, "grip", Pose::identity(), Pose::identity()).unwrap();
        h.update_gesture(&hand([0.0, 0.0, 1.0, 1.0, 1.0]));
        assert!(h.engaged());
        let moved = Pose::from_translation(0.3, 0.0, 0.0);
        h.select(&t, "other", moved, Pose::identity()).unwrap();
        let a = h.anchor.as_ref().unwrap();
        assert_eq!(a.site, "other");
        assert_eq!(a.hand0, moved);
        assert!(!a.engaged);
    }

    #[test]
    fn gesture_hysteresis() {
        let p = GestureParams::default();
        assert!(gesture_state(false, &hand([0.0, 0.0, 0.9, 0.9, 0.9]), &p));
        assert!(!gesture_state(true, &hand([1.0, 1.0, 0.1, 0.1, 0.1]), &p));
        let mid = hand([0.0, 0.0, 0.5, 0.5, 0.5]);
        assert!(gesture_state(true, &mid, &p));
        assert!(!gesture_state(false, &mid, &p));
        assert!(GestureParams::new(0.3, 0.7).is_err());
        assert!(GestureParams::new(0.8, 0.2).is_ok());
    }

    #[test]
    fn delta_in_gripper_frame() {
        let mut a = Anchor {
            site: "grip".into(),
            hand0: Pose::identity(),
            grip0: Pose::from_translation(5.0, 0.0, 0.0),
            engaged: true,
        };
        let out = apply_delta(&a, &Pose::from_translation(0.1, 0.0, 0.0));
        assert!((out.position() - Vector3::new(5.1, 0.0, 0.0)).norm() < 1e-15);

        // Hand rotated 90° about z moves +x in the world: in the hand frame
        // that is -y, which is what the identity-oriented gripper replays.
        let rz = Pose::from_axis_angle(Vector3::z(), FRAC_PI_2);
        a.hand0 = rz;
        a.grip0 = Pose::identity();
        let now = Pose::from_translation(0.1, 0.0, 0.0).compose(&rz);
        let out = apply_delta(&a, &now);
        let oracle = a.grip0.compose(&rz.inverse().compose(&now));
        assert!((out.position() - oracle.position()).norm() < 1e-15);
        assert!((out.position() - Vector3::new(0.0, -0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn disengaged_holds_grip() {
        let a = Anchor {
            site: "grip".into(),
            hand0: Pose::identity(),
            grip0: Pose::from_translation(1.0, 2.0, 3.0),
            engaged: false,
        };
        assert_eq!(apply_delta(&a, &Pose::from_translation(9.0, 9.0, 9.0)), a.grip0);
    }
}
