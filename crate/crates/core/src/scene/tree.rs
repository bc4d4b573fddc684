use nalgebra::Vector3;

use crate::se3::Pose;

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub name: String,
    /// `None` for bodies attached to the world.
    pub parent: Option<usize>,
    pub rest: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointType {
    Hinge,
    Slide,
    Free,
}

impl JointType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hinge => "hinge",
            Self::Slide => "slide",
            Self::Free => "free",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub body: usize,
    pub kind: JointType,
    /// Unit axis in the body frame.
    pub axis: Vector3<f64>,
    /// Radians for hinges, meters for slides; unlimited joints use infinities.
    pub range: (f64, f64),
}

impl Joint {
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.range.0, self.range.1)
    }

    pub fn is_limited(&self) -> bool {
        self.range.0.is_finite() || self.range.1.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub name: String,
    /// `None` for sites attached to the world body.
    pub body: Option<usize>,
    pub local: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MocapBody {
    pub name: String,
    pub body: usize,
    pub initial: Pose,
}

/// Articulated model: bodies in topological order (parents first).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KinematicTree {
    pub bodies: Vec<Body>,
    pub joints: Vec<Joint>,
    pub sites: Vec<Site>,
    pub mocap_bodies: Vec<MocapBody>,
    /// Elements or attributes outside the interpreted subset.
    pub warnings: Vec<String>,
    /// Raw text of actuator/tendon/plugin blocks, carried but never interpreted.
    pub passthrough: Vec<String>,
}

impl KinematicTree {
    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }

    pub fn site_index(&self, name: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.name == name)
    }

    /// Joints carrying a generalized coordinate, in tree order.
    pub fn dof_joints(&self) -> impl Iterator<Item = (usize, &Joint)> {
        self.joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.kind != JointType::Free)
    }

    pub fn dof(&self) -> usize {
        self.dof_joints().count()
    }

    /// Bodies whose pose is set externally (free joints or mocap).
    pub fn is_floating(&self, body: usize) -> bool {
        self.joints
            .iter()
            .any(|j| j.body == body && j.kind == JointType::Free)
    }

    pub fn is_mocap(&self, body: usize) -> bool {
        self.mocap_bodies.iter().any(|m| m.body == body)
    }

    /// Free-joint bodies: the movable objects of a scene.
    pub fn free_bodies(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .joints
            .iter()
            .filter(|j| j.kind == JointType::Free)
            .map(|j| j.body)
            .collect();
        v.dedup();
        v
    }

    /// Check the structural invariants: topological order, unit axes,
    /// ordered ranges.
    pub fn validate(&self) -> Result<(), String> {
        for (i, b) in self.bodies.iter().enumerate() {
            if let Some(p) = b.parent {
                if p >= i {
                    return Err(format!("body '{}' precedes its parent", b.name));
                }
            }
        }
        for j in &self.joints {
            if j.body >= self.bodies.len() {
                return Err(format!("joint '{}' references a missing body", j.name));
            }
            if j.kind != JointType::Free && (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(format!("joint '{}' axis is not unit length", j.name));
            }
            if j.range.0 > j.range.1 {
                return Err(format!("joint '{}' range is inverted", j.name));
            }
        }
        for s in &self.sites {
            if s.body.is_some_and(|b| b >= self.bodies.len()) {
                return Err(format!("site '{}' references a missing body", s.name));
            }
        }
        Ok(())
    }
}
