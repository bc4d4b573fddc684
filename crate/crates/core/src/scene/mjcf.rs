use std::collections::HashSet;

use nalgebra::Vector3;
use roxmltree::{Document, Node};

use super::{Body, Joint, JointType, KinematicTree, MocapBody, SceneError, Site};
use crate::se3::{quat_wxyz, Pose};

/// Elements that carry dynamics or rendering data; kept verbatim.
const PASSTHROUGH: [&str; 7] = [
    "actuator", "tendon", "sensor", "equality", "contact", "extension", "deformable",
];
/// Elements that are understood and deliberately ignored.
const IGNORED: [&str; 11] = [
    "compiler", "option", "size", "visual", "statistic", "default", "asset", "custom",
    "keyframe", "include", "worldbody",
];
const BODY_IGNORED: [&str; 6] = ["geom", "camera", "light", "inertial", "composite", "flexcomp"];

fn malformed(m: impl Into<String>) -> SceneError {
    SceneError::MalformedXml(m.into())
}

fn parse_floats(node: Node, attr: &str, n: usize) -> Result<Option<Vec<f64>>, SceneError> {
    let Some(text) = node.attribute(attr) else {
        return Ok(None);
    };
    let v: Result<Vec<f64>, _> = text.split_whitespace().map(str::parse::<f64>).collect();
    let v = v.map_err(|_| malformed(format!("attribute {attr}=\"{text}\" is not numeric")))?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(malformed(format!(
            "attribute {attr}=\"{text}\" needs {n} finite numbers"
        )));
    }
    Ok(Some(v))
}

struct Ctx<'a> {
    src: &'a str,
    tree: KinematicTree,
    angle_scale: f64,
    visited: HashSet<roxmltree::NodeId>,
}

fn label(node: Node) -> String {
    node.attribute("name").unwrap_or("<unnamed>").to_string()
}

impl<'a> Ctx<'a> {
    fn local_pose(&mut self, node: Node) -> Result<Pose, SceneError> {
        let pos = parse_floats(node, "pos", 3)?.unwrap_or_else(|| vec![0.0; 3]);
        let quat = match parse_floats(node, "quat", 4)? {
            Some(q) if q.iter().all(|c| *c == 0.0) => return Err(malformed("zero quaternion")),
            Some(q) => quat_wxyz(q[0], q[1], q[2], q[3]),
            None => quat_wxyz(1.0, 0.0, 0.0, 0.0),
        };
        for alt in ["euler", "axisangle", "xyaxes", "zaxis"] {
            if node.has_attribute(alt) {
                self.tree.warnings.push(format!(
                    "<{}> '{}': orientation attribute '{alt}' ignored",
                    node.tag_name().name(),
                    label(node)
                ));
            }
        }
        Ok(Pose::new(Vector3::new(pos[0], pos[1], pos[2]), quat))
    }

    fn site(&mut self, node: Node, body: Option<usize>) -> Result<(), SceneError> {
        let local = self.local_pose(node)?;
        let name = node.attribute("name").unwrap_or_default().to_string();
        self.tree.sites.push(Site { name, body, local });
        Ok(())
    }

    fn joint(&mut self, node: Node, body: usize) -> Result<(), SceneError> {
        let name = node.attribute("name").unwrap_or_default().to_string();
        let tag = node.tag_name().name();
        let kind = if tag == "freejoint" {
            JointType::Free
        } else {
            match node.attribute("type").unwrap_or("hinge") {
                "hinge" => JointType::Hinge,
                "slide" => JointType::Slide,
                "free" => JointType::Free,
                other => {
                    return Err(SceneError::UnsupportedJointType {
                        joint: name,
                        kind: other.to_string(),
                    })
                }
            }
        };
        let axis = parse_floats(node, "axis", 3)?.unwrap_or_else(|| vec![0.0, 0.0, 1.0]);
        let axis = Vector3::new(axis[0], axis[1], axis[2]);
        let norm = axis.norm();
        if kind != JointType::Free && norm < 1e-12 {
            return Err(malformed(format!("joint '{name}' has a zero axis")));
        }
        let limited = node.attribute("limited") != Some("false");
        let range = match parse_floats(node, "range", 2)? {
            Some(r) if limited => {
                let scale = if kind == JointType::Hinge { self.angle_scale } else { 1.0 };
                (r[0] * scale, r[1] * scale)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        };
        if range.0 > range.1 {
            return Err(malformed(format!("joint '{name}' range is inverted")));
        }
        if node.has_attribute("pos") {
            self.tree
                .warnings
                .push(format!("joint '{name}': pos offset ignored"));
        }
        self.tree.joints.push(Joint {
            name,
            body,
            kind,
            axis: if kind == JointType::Free { Vector3::zeros() } else { axis / norm },
            range,
        });
        Ok(())
    }

    fn body(&mut self, node: Node, parent: Option<usize>) -> Result<(), SceneError> {
        self.visited.insert(node.id());
        let rest = self.local_pose(node)?;
        let name = node.attribute("name").unwrap_or_default().to_string();
        let idx = self.tree.bodies.len();
        self.tree.bodies.push(Body {
            name: name.clone(),
            parent,
            rest,
        });
        if node.attribute("mocap") == Some("true") {
            if parent.is_some() {
                self.tree
                    .warnings
                    .push(format!("mocap body '{name}' is not a child of worldbody"));
            }
            self.tree.mocap_bodies.push(MocapBody {
                name,
                body: idx,
                initial: rest,
            });
        }
        self.children(node, Some(idx))
    }

    fn children(&mut self, node: Node, body: Option<usize>) -> Result<(), SceneError> {
        for child in node.children().filter(Node::is_element) {
            let tag = child.tag_name().name();
            match tag {
                "body" => self.body(child, body)?,
                "site" => self.site(child, body)?,
                "joint" | "freejoint" => match body {
                    Some(b) => self.joint(child, b)?,
                    None => return Err(malformed("joint attached to worldbody")),
                },
                t if BODY_IGNORED.contains(&t) => {}
                t if PASSTHROUGH.contains(&t) => self.passthrough(child),
                t => self
                    .tree
                    .warnings
                    .push(format!("unsupported element <{t}> skipped")),
            }
        }
        Ok(())
    }

    fn passthrough(&mut self, node: Node) {
        self.tree
            .passthrough
            .push(self.src[node.range()].to_string());
    }
}

/// Parse the interpreted MJCF subset into a kinematic tree.
pub fn parse_mjcf(xml: &str) -> Result<KinematicTree, SceneError> {
    let doc = Document::parse(xml).map_err(|e| malformed(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "mujoco" {
        return Err(malformed(format!(
            "root element is <{}>, expected <mujoco>",
            root.tag_name().name()
        )));
    }
    let angle_scale = match root
        .children()
        .find(|n| n.has_tag_name("compiler"))
        .and_then(|c| c.attribute("angle"))
    {
        Some("radian") => 1.0,
        Some("degree") | None => std::f64::consts::PI / 180.0,
        Some(other) => return Err(malformed(format!("compiler angle=\"{other}\""))),
    };
    let mut ctx = Ctx {
        src: xml,
        tree: KinematicTree::default(),
        angle_scale,
        visited: HashSet::new(),
    };
    for child in root.children().filter(Node::is_element) {
        let tag = child.tag_name().name();
        if tag == "worldbody" {
            ctx.children(child, None)?;
        } else if PASSTHROUGH.contains(&tag) {
            ctx.passthrough(child);
        } else if !IGNORED.contains(&tag) {
            ctx.tree
                .warnings
                .push(format!("unsupported element <{tag}> skipped"));
        }
    }
    if let Some(orphan) = doc
        .descendants()
        .find(|n| n.has_tag_name("body") && !ctx.visited.contains(&n.id()))
    {
        return Err(SceneError::OrphanBody(label(orphan)));
    }
    Ok(ctx.tree)
}
