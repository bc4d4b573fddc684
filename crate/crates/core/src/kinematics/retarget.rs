use std::fmt;

use serde::{Deserialize, Serialize};

use super::{forward_kinematics, JointConfig, KinematicsError, WeldTarget};
use crate::scene::KinematicTree;
use crate::se3::Pose;

/// Ratio of rotation to position weight when a binding omits `rot_weight`.
pub const DEFAULT_ROT_RATIO: f64 = 0.3;
const MIN_HAND_SPAN: f64 = 1e-4;

/// Tracked human hand point: the wrist or one of the five fingertips
/// (0 = thumb, 1 = index, 2 = middle, 3 = ring, 4 = pinky).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Landmark {
    Wrist,
    Tip(u8),
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Landmark::Wrist => f.write_str("wrist"),
            Landmark::Tip(i) => write!(f, "tip_{i}"),
        }
    }
}

impl TryFrom<String> for Landmark {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "wrist" {
            return Ok(Landmark::Wrist);
        }
        match s.strip_prefix("tip_").and_then(|d| d.parse::<u8>().ok()) {
            Some(i) if i < 5 => Ok(Landmark::Tip(i)),
            _ => Err(format!("unknown landmark '{s}'")),
        }
    }
}

impl From<Landmark> for String {
    fn from(l: Landmark) -> String {
        l.to_string()
    }
}

/// One tracked hand sample in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandFrame {
    pub wrist: Pose,
    pub fingertips: [Pose; 5],
    /// Per-finger closure in `[0, 1]`, 0 fully open.
    pub curl: [f64; 5],
}

impl HandFrame {
    pub fn open(wrist: Pose, fingertips: [Pose; 5]) -> Self {
        Self {
            wrist,
            fingertips,
            curl: [0.0; 5],
        }
    }

    pub fn landmark(&self, l: Landmark) -> &Pose {
        match l {
            Landmark::Wrist => &self.wrist,
            Landmark::Tip(i) => &self.fingertips[i as usize],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.wrist.is_finite()
            && self.fingertips.iter().all(Pose::is_finite)
            && self.curl.iter().all(|c| (0.0..=1.0).contains(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub landmark: Landmark,
    pub site: String,
    pub pos_weight: f64,
    pub rot_weight: f64,
}

#[derive(Deserialize)]
struct RawBinding {
    landmark: Landmark,
    site: String,
    #[serde(default = "one")]
    pos_weight: f64,
    rot_weight: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct RawMap {
    scale: f64,
    bindings: Vec<RawBinding>,
}

/// User-specified landmark→site bindings plus the hand scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetargetMap {
    pub scale: f64,
    pub bindings: Vec<Binding>,
}

impl<'de> Deserialize<'de> for RetargetMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawMap::deserialize(d)?;
        Ok(RetargetMap {
            scale: raw.scale,
            bindings: raw
                .bindings
                .into_iter()
                .map(|b| Binding {
                    rot_weight: b.rot_weight.unwrap_or(DEFAULT_ROT_RATIO * b.pos_weight),
                    landmark: b.landmark,
                    site: b.site,
                    pos_weight: b.pos_weight,
                })
                .collect(),
        })
    }
}

impl RetargetMap {
    pub fn from_json(text: &str) -> Result<Self, KinematicsError> {
        serde_json::from_str(text).map_err(|e| KinematicsError::InvalidMap(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("retarget map serializes")
    }

    /// Check the map against a model: sites exist, one binding per
    /// landmark, positive scale, usable weights.
    pub fn validate(&self, tree: &KinematicTree) -> Result<(), KinematicsError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(KinematicsError::InvalidMap("scale must be positive".into()));
        }
        let mut seen = Vec::new();
        for b in &self.bindings {
            if tree.site_index(&b.site).is_none() {
                return Err(KinematicsError::UnknownSite(b.site.clone()));
            }
            if seen.contains(&b.landmark) {
                return Err(KinematicsError::InvalidMap(format!(
                    "landmark {} bound twice",
                    b.landmark
                )));
            }
            seen.push(b.landmark);
            let ok = b.pos_weight >= 0.0 && b.rot_weight >= 0.0 && b.pos_weight + b.rot_weight > 0.0;
            if !ok {
                return Err(KinematicsError::InvalidWeights(b.site.clone()));
            }
        }
        Ok(())
    }

    pub fn wrist_site(&self) -> Option<&str> {
        self.bindings
            .iter()
            .find(|b| b.landmark == Landmark::Wrist)
            .map(|b| b.site.as_str())
    }
}

/// Hand scale that makes the human wrist→fingertip spans match the robot's
/// wrist→site spans at the rest configuration.
pub fn calibrate_scale(
    human: &HandFrame,
    tree: &KinematicTree,
    map: &RetargetMap,
) -> Result<f64, KinematicsError> {
    let tips: Vec<&Binding> = map
        .bindings
        .iter()
        .filter(|b| matches!(b.landmark, Landmark::Tip(_)))
        .collect();
    if tips.len() < 2 {
        return Err(KinematicsError::TooFewBindings(tips.len()));
    }
    let wrist_site = map.wrist_site().ok_or(KinematicsError::MissingWristBinding)?;
    let rest = forward_kinematics(tree, &JointConfig::zeros(tree))?;
    let site_pos = |name: &str| {
        rest.site(tree, name)
            .map(|p| *p.position())
            .ok_or_else(|| KinematicsError::UnknownSite(name.to_string()))
    };
    let robot_wrist = site_pos(wrist_site)?;
    let mut robot_sum = 0.0;
    let mut human_sum = 0.0;
    for b in &tips {
        robot_sum += (site_pos(&b.site)? - robot_wrist).norm();
        human_sum += (human.landmark(b.landmark).position() - human.wrist.position()).norm();
    }
    let n = tips.len() as f64;
    let human_mean = human_sum / n;
    if human_mean < MIN_HAND_SPAN {
        return Err(KinematicsError::DegenerateHand);
    }
    Ok(robot_sum / n / human_mean)
}

/// Map a human hand sample to weld targets anchored at `robot_wrist`.
///
/// Fingertips are expressed relative to the human wrist, their offsets
/// scaled by `map.scale`, then re-attached to the robot wrist.
pub fn retarget(human: &HandFrame, map: &RetargetMap, robot_wrist: &Pose) -> Vec<WeldTarget> {
    let wrist_inv = human.wrist.inverse();
    map.bindings
        .iter()
        .map(|b| {
            let target = match b.landmark {
                Landmark::Wrist => *robot_wrist,
                Landmark::Tip(i) => {
                    let local = wrist_inv.compose(&human.fingertips[i as usize]);
                    let scaled = local.with_position(local.position() * map.scale);
                    robot_wrist.compose(&scaled)
                }
            };
            WeldTarget::new(b.site.clone(), target, b.pos_weight, b.rot_weight)
        })
        .collect()
}
