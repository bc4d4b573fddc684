//! Scene description: the declarative DSL, anchor resolution, MJCF emission,
//! and parsing of an MJCF subset into a [`KinematicTree`].

mod assets;
mod dsl;
mod emit;
mod mjcf;
mod resolve;
mod tree;

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

pub use assets::{collect_assets, CollectedAssets};
pub use dsl::parse_scene;
pub use emit::{emit_mjcf, format_number};
pub use mjcf::parse_mjcf;
pub use resolve::resolve;
pub use tree::{Body, Joint, JointType, KinematicTree, MocapBody, Site};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("SyntaxError at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("DuplicateName '{name}' at {line}:{col}")]
    DuplicateName { name: String, line: usize, col: usize },
    #[error("UnknownKind '{kind}' at {line}:{col}")]
    UnknownKind { kind: String, line: usize, col: usize },
    #[error("UnknownAnchor '{node}.{anchor}'")]
    UnknownAnchor { node: String, anchor: String },
    #[error("CyclicAnchorReference through '{0}'")]
    CyclicAnchorReference(String),
    #[error("UnresolvedAnchor on node '{0}'; run resolve first")]
    UnresolvedAnchor(String),
    #[error("MalformedXML: {0}")]
    MalformedXml(String),
    #[error("UnsupportedJointType '{kind}' on joint '{joint}'")]
    UnsupportedJointType { joint: String, kind: String },
    #[error("OrphanBody '{0}': body outside worldbody")]
    OrphanBody(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Scene,
    Body,
    Box,
    Mesh,
    Site,
    Camera,
    Light,
    Include,
}

impl NodeKind {
    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "scene" => Self::Scene,
            "body" => Self::Body,
            "box" => Self::Box,
            "mesh" => Self::Mesh,
            "site" => Self::Site,
            "camera" => Self::Camera,
            "light" => Self::Light,
            "include" => Self::Include,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Self::Scene => "scene",
            Self::Body => "body",
            Self::Box => "box",
            Self::Mesh => "mesh",
            Self::Site => "site",
            Self::Camera => "camera",
            Self::Light => "light",
            Self::Include => "include",
        }
    }

    pub fn allows_children(self) -> bool {
        matches!(self, Self::Scene | Self::Body)
    }
}

/// `<node>.<anchor>` reference in a `pos` attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnchorRef {
    pub node: String,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub kind: NodeKind,
    /// Empty for unnamed nodes.
    pub name: String,
    /// Offset in the parent frame; when `pos_ref` is set this is added to the
    /// referenced anchor's world position instead.
    pub pos: Vector3<f64>,
    pub pos_ref: Option<AnchorRef>,
    pub quat: UnitQuaternion<f64>,
    /// 1 to 3 non-negative components, meaning depends on `kind`.
    pub size: Vec<f64>,
    pub attrs: BTreeMap<String, String>,
    /// Named offsets from the node's world position, expressed in the world frame.
    pub anchors: BTreeMap<String, Vector3<f64>>,
    pub children: Vec<SceneNode>,
}

impl SceneNode {
    pub fn new(kind: NodeKind, name: impl Into<String>) -> Self {
        Self {
            kind,
            name: name.into(),
            pos: Vector3::zeros(),
            pos_ref: None,
            quat: UnitQuaternion::identity(),
            size: Vec::new(),
            attrs: BTreeMap::new(),
            anchors: BTreeMap::new(),
            children: Vec::new(),
        }
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a SceneNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDoc {
    pub root: SceneNode,
}

impl SceneDoc {
    pub fn leaf_count(&self) -> usize {
        let mut n = 0;
        for c in &self.root.children {
            c.walk(&mut |node| {
                if node.children.is_empty() {
                    n += 1
                }
            });
        }
        n
    }

    /// Number of levels including the root.
    pub fn depth(&self) -> usize {
        fn depth(n: &SceneNode) -> usize {
            1 + n.children.iter().map(depth).max().unwrap_or(0)
        }
        depth(&self.root)
    }

    pub fn is_resolved(&self) -> bool {
        let mut ok = true;
        self.root.walk(&mut |n| ok &= n.pos_ref.is_none());
        ok
    }

    pub fn find(&self, name: &str) -> Option<&SceneNode> {
        let mut found = None;
        self.root.walk(&mut |n| {
            if found.is_none() && !name.is_empty() && n.name == name {
                found = Some(n)
            }
        });
        found
    }
}
