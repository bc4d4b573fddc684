use std::fmt::Write;

use nalgebra::{UnitQuaternion, Vector3};

use super::{NodeKind, SceneDoc, SceneError, SceneNode};

/// Shortest decimal that parses back to the same `f64`; negative zero
/// prints as `0`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn format_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format_number(*x))
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            _ => out.push(c),
        }
    }
    out
}

/// Body attributes that describe its joint rather than the body element.
const JOINT_KEYS: [&str; 4] = ["joint", "joint_name", "axis", "range"];

struct Emitter {
    out: String,
    meshes: Vec<(String, String)>,
    mesh_counter: usize,
}

struct Attrs(Vec<(String, String)>);

impl Attrs {
    fn new() -> Self {
        Attrs(Vec::new())
    }

    fn push(&mut self, k: &str, v: impl Into<String>) {
        self.0.push((k.to_string(), v.into()));
    }

    fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            let _ = write!(s, " {}=\"{}\"", k, escape(v));
        }
        s
    }
}

fn quat_is_identity(q: &UnitQuaternion<f64>) -> bool {
    q.w == 1.0 && q.i == 0.0 && q.j == 0.0 && q.k == 0.0
}

fn placement(node: &SceneNode, attrs: &mut Attrs) {
    attrs.push("pos", format_vec(node.pos.as_slice()));
    if !quat_is_identity(&node.quat) {
        let q = &node.quat;
        attrs.push("quat", format_vec(&[q.w, q.i, q.j, q.k]));
    }
}

impl Emitter {
    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn node(&mut self, node: &SceneNode, depth: usize) -> Result<(), SceneError> {
        if node.pos_ref.is_some() {
            return Err(SceneError::UnresolvedAnchor(node.name.clone()));
        }
        let mut a = Attrs::new();
        if !node.name.is_empty() {
            a.push("name", node.name.clone());
        }
        let skip: &[&str] = match node.kind {
            NodeKind::Body => &JOINT_KEYS,
            NodeKind::Mesh => &["file"],
            _ => &[],
        };
        let element = match node.kind {
            NodeKind::Scene => unreachable!("scene is only valid at the root"),
            NodeKind::Body => {
                placement(node, &mut a);
                "body"
            }
            NodeKind::Box => {
                a.push("type", "box");
                placement(node, &mut a);
                if !node.size.is_empty() {
                    a.push("size", format_vec(&node.size));
                }
                "geom"
            }
            NodeKind::Mesh => {
                let mesh_name = if node.name.is_empty() {
                    self.mesh_counter += 1;
                    format!("mesh{}", self.mesh_counter)
                } else {
                    node.name.clone()
                };
                if let Some(file) = node.attrs.get("file") {
                    self.meshes.push((mesh_name.clone(), file.clone()));
                }
                a.push("type", "mesh");
                a.push("mesh", mesh_name);
                placement(node, &mut a);
                if !node.size.is_empty() {
                    a.push("size", format_vec(&node.size));
                }
                "geom"
            }
            NodeKind::Site => {
                placement(node, &mut a);
                if !node.size.is_empty() {
                    a.push("size", format_vec(&node.size));
                }
                "site"
            }
            NodeKind::Camera => {
                placement(node, &mut a);
                "camera"
            }
            NodeKind::Light => {
                a.push("pos", format_vec(node.pos.as_slice()));
                if !quat_is_identity(&node.quat) && !node.attrs.contains_key("dir") {
                    let dir = node.quat * Vector3::new(0.0, 0.0, -1.0);
                    a.push("dir", format_vec(dir.as_slice()));
                }
                "light"
            }
            NodeKind::Include => "include",
        };
        for (k, v) in &node.attrs {
            if !skip.contains(&k.as_str()) {
                a.push(k, v.clone());
            }
        }

        let mut inner: Vec<String> = Vec::new();
        if node.kind == NodeKind::Body {
            if let Some(kind) = node.attrs.get("joint") {
                let mut j = Attrs::new();
                match node.attrs.get("joint_name") {
                    Some(n) => j.push("name", n.clone()),
                    None if !node.name.is_empty() => j.push("name", format!("{}_joint", node.name)),
                    None => {}
                }
                j.push("type", kind.clone());
                if let Some(axis) = node.attrs.get("axis") {
                    j.push("axis", axis.clone());
                }
                if let Some(range) = node.attrs.get("range") {
                    j.push("range", range.clone());
                }
                inner.push(format!("<joint{}/>", j.render()));
            }
        }

        if node.children.is_empty() && inner.is_empty() {
            self.line(depth, &format!("<{element}{}/>", a.render()));
        } else {
            self.line(depth, &format!("<{element}{}>", a.render()));
            for l in &inner {
                self.line(depth + 1, l);
            }
            for c in &node.children {
                self.node(c, depth + 1)?;
            }
            self.line(depth, &format!("</{element}>"));
        }
        Ok(())
    }
}

/// Compile a resolved scene to MJCF text.
///
/// Output layout: `<mujoco>` root with a `<compiler angle="radian"/>`
/// header, an `<asset>` block when meshes reference files, then
/// `<worldbody>` holding the scene's children in document order. Body
/// `joint`/`axis`/`range`/`joint_name` attributes become a nested
/// `<joint>` element.
pub fn emit_mjcf(doc: &SceneDoc) -> Result<String, SceneError> {
    let mut body = Emitter {
        out: String::new(),
        meshes: Vec::new(),
        mesh_counter: 0,
    };
    if doc.root.pos_ref.is_some() {
        return Err(SceneError::UnresolvedAnchor(doc.root.name.clone()));
    }
    for c in &doc.root.children {
        body.node(c, 2)?;
    }

    let mut out = String::new();
    if doc.root.name.is_empty() {
        out.push_str("<mujoco>\n");
    } else {
        let _ = writeln!(out, "<mujoco model=\"{}\">", escape(&doc.root.name));
    }
    out.push_str("  <compiler angle=\"radian\"/>\n");
    if !body.meshes.is_empty() {
        out.push_str("  <asset>\n");
        for (name, file) in &body.meshes {
            let _ = writeln!(
                out,
                "    <mesh name=\"{}\" file=\"{}\"/>",
                escape(name),
                escape(file)
            );
        }
        out.push_str("  </asset>\n");
    }
    if body.out.is_empty() {
        out.push_str("  <worldbody/>\n");
    } else {
        out.push_str("  <worldbody>\n");
        out.push_str(&body.out);
        out.push_str("  </worldbody>\n");
    }
    out.push_str("</mujoco>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{parse_scene, resolve};

    #[test]
    fn empty_scene() {
        let xml = emit_mjcf(&parse_scene("(scene)").unwrap()).unwrap();
        assert_eq!(
            xml,
            "<mujoco>\n  <compiler angle=\"radian\"/>\n  <worldbody/>\n</mujoco>\n"
        );
    }

    #[test]
    fn table_and_cube() {
        let doc = parse_scene(
            r#"(scene "tabletop"
                 (body "table" anchor.surface_origin=[0, 0, 0.75]
                   (box "top" pos=[0, 0, 0.73] size=[0.4, 0.6, 0.02]))
                 (box "cube" size=[0.01, 0.01, 0.01] pos=[0., 0.1, 0.02] + table.surface_origin))"#,
        )
        .unwrap();
        assert!(matches!(emit_mjcf(&doc), Err(SceneError::UnresolvedAnchor(_))));
        let xml = emit_mjcf(&resolve(&doc).unwrap()).unwrap();
        assert!(xml.contains(r#"<geom name="cube" type="box" pos="0 0.1 0.77" size="0.01 0.01 0.01"/>"#), "{xml}");
        assert!(roxmltree::Document::parse(&xml).is_ok());
    }

    #[test]
    fn joints_meshes_and_escaping() {
        let doc = parse_scene(
            r#"(scene
                 (body "arm" joint="hinge" axis=[0, 0, 1] range=[-1.5, 1.5]
                   (mesh "link" file="meshes/link.obj")
                   (site "tip" pos=[1, 0, 0] size=0.01))
                 (light "key" pos=[0, 0, 3] label="a<b&c"))"#,
        )
        .unwrap();
        let xml = emit_mjcf(&doc).unwrap();
        assert!(xml.contains(r#"<mesh name="link" file="meshes/link.obj"/>"#));
        assert!(xml.contains(r#"<joint name="arm_joint" type="hinge" axis="0 0 1" range="-1.5 1.5"/>"#));
        assert!(xml.contains(r#"label="a&lt;b&amp;c""#));
        assert!(roxmltree::Document::parse(&xml).is_ok());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(1e-7).parse::<f64>().unwrap(), 1e-7);
    }
}
