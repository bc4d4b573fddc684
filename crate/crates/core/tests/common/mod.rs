//! Generators and independent oracles shared by the integration suites.
//! The oracles use plain 4×4 matrices and Rodrigues' formula rather than
//! the crate's quaternion code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write;

use lucidforge::episode::{Episode, EpisodeMeta, Frame};
use lucidforge::kinematics::JointConfig;
use lucidforge::Pose;
use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform unit quaternion (rejection sampling in the 4-ball), scalar first.
pub fn random_quat(r: &mut Rng8) -> [f64; 4] {
    loop {
        let q: [f64; 4] = [
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
        ];
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return q.map(|v| v / n);
        }
    }
}

pub fn random_unit(r: &mut Rng8) -> [f64; 3] {
    loop {
        let v = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.map(|x| x / n);
        }
    }
}

pub fn random_pose(r: &mut Rng8, extent: f64) -> Pose {
    let p = [
        r.gen_range(-extent..extent),
        r.gen_range(-extent..extent),
        r.gen_range(-extent..extent),
    ];
    Pose::from_arrays(p, random_quat(r))
}

/// Rounded to 4 decimals so generated text stays short.
pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

// ---- matrix oracle -------------------------------------------------------

pub fn quat_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Rodrigues: `I + sinθ K + (1 − cosθ) K²`.
pub fn rodrigues(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    let n = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [x, y, z] = axis.map(|v| v / n);
    let k = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

pub fn homogeneous(rot: Matrix3<f64>, p: [f64; 3]) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    m[(0, 3)] = p[0];
    m[(1, 3)] = p[1];
    m[(2, 3)] = p[2];
    m
}

/// Largest of position error and rotation-matrix Frobenius error.
pub fn pose_matrix_error(pose: &Pose, m: &Matrix4<f64>) -> f64 {
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let p = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    let dr = (pose.rotation_matrix() - r).norm();
    let dp = (pose.position() - p).norm();
    dr.max(dp)
}

fn fmt3(v: [f64; 3]) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

fn fmt4(v: [f64; 4]) -> String {
    format!("{} {} {} {}", v[0], v[1], v[2], v[3])
}

// ---- random kinematic trees ----------------------------------------------

#[derive(Debug, Clone)]
pub enum GenJoint {
    Hinge { axis: [f64; 3], range: (f64, f64) },
    Slide { axis: [f64; 3], range: (f64, f64) },
}

#[derive(Debug, Clone)]
pub struct GenBody {
    pub parent: Option<usize>,
    pub pos: [f64; 3],
    pub quat: [f64; 4],
    pub joints: Vec<GenJoint>,
    pub sites: Vec<([f64; 3], [f64; 4])>,
}

/// A random tree of hinge/slide joints with its MJCF text.
#[derive(Debug, Clone)]
pub struct GenTree {
    pub bodies: Vec<GenBody>,
}

impl GenTree {
    pub fn random(r: &mut Rng8, max_bodies: usize) -> Self {
        let n = r.gen_range(1..=max_bodies);
        let mut bodies = Vec::with_capacity(n);
        for i in 0..n {
            let parent = if i == 0 || r.gen_bool(0.2) { None } else { Some(r.gen_range(0..i)) };
            let joints = (0..r.gen_range(0..=2))
                .map(|_| {
                    let axis = random_unit(r);
                    if r.gen_bool(0.75) {
                        GenJoint::Hinge { axis, range: (-3.0, 3.0) }
                    } else {
                        GenJoint::Slide { axis, range: (-0.5, 0.5) }
                    }
                })
                .collect();
            let sites = (0..r.gen_range(0..=2))
                .map(|_| {
                    let p = [r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3)];
                    (p, random_quat(r))
                })
                .collect();
            bodies.push(GenBody {
                parent,
                pos: [r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)],
                quat: random_quat(r),
                joints,
                sites,
            });
        }
        GenTree { bodies }
    }

    pub fn joint_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (i, b) in self.bodies.iter().enumerate() {
            for k in 0..b.joints.len() {
                v.push(format!("j{i}_{k}"));
            }
        }
        v
    }

    pub fn to_mjcf(&self) -> String {
        let mut out = String::from("<mujoco model=\"gen\">\n  <compiler angle=\"radian\"/>\n  <worldbody>\n");
        for (i, b) in self.bodies.iter().enumerate() {
            if b.parent.is_none() {
                self.emit_body(i, 2, &mut out);
            }
        }
        out.push_str("  </worldbody>\n</mujoco>\n");
        out
    }

    fn emit_body(&self, i: usize, depth: usize, out: &mut String) {
        let b = &self.bodies[i];
        let pad = "  ".repeat(depth);
        let _ = writeln!(out, "{pad}<body name=\"b{i}\" pos=\"{}\" quat=\"{}\">", fmt3(b.pos), fmt4(b.quat));
        for (k, j) in b.joints.iter().enumerate() {
            let (kind, axis, range) = match j {
                GenJoint::Hinge { axis, range } => ("hinge", axis, range),
                GenJoint::Slide { axis, range } => ("slide", axis, range),
            };
            let _ = writeln!(
                out,
                "{pad}  <joint name=\"j{i}_{k}\" type=\"{kind}\" axis=\"{}\" range=\"{} {}\"/>",
                fmt3(*axis),
                range.0,
                range.1
            );
        }
        for (k, (p, q)) in b.sites.iter().enumerate() {
            let _ = writeln!(out, "{pad}  <site name=\"s{i}_{k}\" pos=\"{}\" quat=\"{}\"/>", fmt3(*p), fmt4(*q));
        }
        for c in (0..self.bodies.len()).filter(|&c| self.bodies[c].parent == Some(i)) {
            self.emit_body(c, depth + 1, out);
        }
        let _ = writeln!(out, "{pad}</body>");
    }

    /// Random joint values inside each range, keyed by joint name.
    pub fn random_q(&self, r: &mut Rng8) -> BTreeMap<String, f64> {
        let mut q = BTreeMap::new();
        for (i, b) in self.bodies.iter().enumerate() {
            for (k, j) in b.joints.iter().enumerate() {
                let (lo, hi) = match j {
                    GenJoint::Hinge { range, .. } | GenJoint::Slide { range, .. } => *range,
                };
                q.insert(format!("j{i}_{k}"), r.gen_range(lo..hi));
            }
        }
        q
    }

    /// World transforms of every body and site by name, from matrices.
    pub fn oracle(&self, q: &BTreeMap<String, f64>) -> BTreeMap<String, Matrix4<f64>> {
        let mut world: Vec<Option<Matrix4<f64>>> = vec![None; self.bodies.len()];
        let mut out = BTreeMap::new();
        // Parents always precede children in generation order.
        for (i, b) in self.bodies.iter().enumerate() {
            let parent = b.parent.map_or(Matrix4::identity(), |p| world[p].expect("parent first"));
            let mut m = parent * homogeneous(quat_matrix(b.quat), b.pos);
            for (k, j) in b.joints.iter().enumerate() {
                let v = q[&format!("j{i}_{k}")];
                m *= match j {
                    GenJoint::Hinge { axis, .. } => homogeneous(rodrigues(*axis, v), [0.0; 3]),
                    GenJoint::Slide { axis, .. } => homogeneous(Matrix3::identity(), axis.map(|a| a * v)),
                };
            }
            world[i] = Some(m);
            out.insert(format!("b{i}"), m);
            for (k, (p, sq)) in b.sites.iter().enumerate() {
                out.insert(format!("s{i}_{k}"), m * homogeneous(quat_matrix(*sq), *p));
            }
        }
        out
    }
}

/// Joint vector in the parsed tree's coordinate order.
pub fn q_in_tree_order(tree: &lucidforge::scene::KinematicTree, q: &BTreeMap<String, f64>) -> JointConfig {
    JointConfig(tree.dof_joints().map(|(_, j)| q[&j.name]).collect())
}

// ---- hand and arm models -------------------------------------------------

/// Palm with three fingers of four hinges each (one abduction, three
/// flexion), fingertip sites `tip0..tip2`.
pub fn three_finger_hand() -> String {
    let mut xml = String::from(
        "<mujoco model=\"hand3\">\n  <compiler angle=\"radian\"/>\n  <worldbody>\n    <body name=\"palm\">\n      <site name=\"wrist\"/>\n",
    );
    for (f, y) in [-0.03, 0.0, 0.03].iter().enumerate() {
        let _ = write!(
            xml,
            r#"      <body name="f{f}_0" pos="0.08 {y} 0">
        <joint name="f{f}_abd" axis="0 0 1" range="-0.4 0.4"/>
        <joint name="f{f}_mcp" axis="0 1 0" range="-0.2 1.6"/>
        <body name="f{f}_1" pos="0.045 0 0">
          <joint name="f{f}_pip" axis="0 1 0" range="-0.1 1.8"/>
          <body name="f{f}_2" pos="0.03 0 0">
            <joint name="f{f}_dip" axis="0 1 0" range="-0.1 1.4"/>
            <site name="tip{f}" pos="0.025 0 0"/>
          </body>
        </body>
      </body>
"#
        );
    }
    xml.push_str("    </body>\n  </worldbody>\n</mujoco>\n");
    xml
}

/// Ten-joint arm carrying a five-finger hand (4 joints per finger): 30
/// hinge joints, a wrist site, five fingertip sites and a free cube beside
/// the wrist.
pub fn arm30() -> String {
    let mut xml = String::from("<mujoco model=\"arm30\">\n  <compiler angle=\"radian\"/>\n  <worldbody>\n");
    let mut close = 0;
    for k in 0..10 {
        let axis = if k % 2 == 0 { "0 0 1" } else { "0 1 0" };
        let pos = if k == 0 { "0 0 0.1" } else { "0.12 0 0" };
        let _ = writeln!(
            xml,
            "{}<body name=\"link{k}\" pos=\"{pos}\"><joint name=\"a{k}\" axis=\"{axis}\" range=\"-2.5 2.5\"/>",
            "  ".repeat(k + 2)
        );
        close += 1;
    }
    let pad = "  ".repeat(12);
    let _ = writeln!(xml, "{pad}<body name=\"palm\" pos=\"0.1 0 0\"><site name=\"wrist\"/>");
    for f in 0..5 {
        let y = -0.04 + 0.02 * f as f64;
        let _ = writeln!(
            xml,
            "{pad}  <body name=\"f{f}a\" pos=\"0.06 {y} 0\"><joint name=\"f{f}_abd\" axis=\"0 0 1\" range=\"-0.4 0.4\"/><joint name=\"f{f}_mcp\" axis=\"0 1 0\" range=\"-0.2 1.6\"/>\n{pad}    <body name=\"f{f}b\" pos=\"0.04 0 0\"><joint name=\"f{f}_pip\" axis=\"0 1 0\" range=\"-0.1 1.8\"/>\n{pad}      <body name=\"f{f}c\" pos=\"0.03 0 0\"><joint name=\"f{f}_dip\" axis=\"0 1 0\" range=\"-0.1 1.4\"/><site name=\"tip{f}\" pos=\"0.02 0 0\"/></body></body></body>"
        );
    }
    let _ = writeln!(xml, "{pad}</body>");
    for k in (0..close).rev() {
        let _ = writeln!(xml, "{}</body>", "  ".repeat(k + 2));
    }
    xml.push_str("    <body name=\"cube\" pos=\"1.2 0.02 0.1\"><freejoint/></body>\n");
    xml.push_str("  </worldbody>\n</mujoco>\n");
    xml
}

// ---- episodes -------------------------------------------------------------

/// Smooth random-walk episode at 25 Hz over the given keys.
pub fn random_episode(r: &mut Rng8, frames: usize, keys: &[&str], dof: usize) -> Episode {
    let mut meta = EpisodeMeta::new(format!("{:016x}", r.gen::<u64>()), format!("{:016x}", r.gen::<u64>()));
    if r.gen_bool(0.5) {
        meta.created = Some(r.gen_range(1_600_000_000..1_900_000_000));
    }
    let mut ep = Episode::new(meta);
    let mut poses: Vec<Pose> = keys.iter().map(|_| random_pose(r, 0.5)).collect();
    let mut q: Vec<f64> = (0..dof).map(|_| r.gen_range(-1.0..1.0)).collect();
    for i in 0..frames {
        let mut f = Frame::new(i as f64 / 25.0);
        for (k, p) in keys.iter().zip(poses.iter_mut()) {
            let step = Pose::from_axis_angle(Vector3::from(random_unit(r)), r.gen_range(0.0..0.05))
                .with_position(Vector3::from(random_unit(r)) * r.gen_range(0.0..0.01));
            *p = step.compose(p);
            f.mocap.insert(k.to_string(), *p);
            f.action.insert(k.to_string(), p.compose(&Pose::from_translation(0.0, 0.0, 0.01)));
        }
        for v in q.iter_mut() {
            *v += r.gen_range(-0.02..0.02);
        }
        f.q = JointConfig(q.clone());
        if keys.len() > 1 && r.gen_bool(0.3) {
            f.attachments.push((keys[1].to_string(), keys[0].to_string()));
        }
        ep.append_frame(f).expect("generated episodes are valid");
    }
    ep
}

pub fn quat_close(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, tol: f64) -> bool {
    let (a, b) = (a.coords, b.coords);
    (a - b).amax() <= tol || (a + b).amax() <= tol
}

// ---- scene DSL ------------------------------------------------------------

/// A generated scene with the world pose each named node should end up at.
pub struct GenScene {
    pub text: String,
    pub expected_world: BTreeMap<String, Matrix4<f64>>,
    /// `(name, kind keyword)` of every node in document order.
    pub nodes: Vec<(String, &'static str)>,
}

struct SceneGen<'a> {
    r: &'a mut Rng8,
    count: usize,
    max: usize,
    /// Declared anchors so far: (node name, anchor name, node world pos + offset).
    anchors: Vec<(String, String, Vector3<f64>)>,
    expected: BTreeMap<String, Matrix4<f64>>,
    nodes: Vec<(String, &'static str)>,
}

fn vec_text(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(","))
}

impl SceneGen<'_> {
    fn node(&mut self, parent_world: Matrix4<f64>, depth: usize, out: &mut String) {
        let i = self.count;
        self.count += 1;
        let kinds = if depth < 3 { ["body", "body", "box", "site", "camera"] } else { ["box", "site", "camera", "box", "site"] };
        let kind = kinds[self.r.gen_range(0..kinds.len())];
        let name = format!("n{i}");
        self.nodes.push((name.clone(), kind));
        let pos = [round4(self.r.gen_range(-1.0..1.0)), round4(self.r.gen_range(-1.0..1.0)), round4(self.r.gen_range(-1.0..1.0))];
        let quat = if self.r.gen_bool(0.5) {
            [1.0, 0.0, 0.0, 0.0]
        } else {
            random_quat(self.r).map(round4)
        };
        let _ = write!(out, "({kind} \"{name}\"");
        let reference = if !self.anchors.is_empty() && self.r.gen_bool(0.3) {
            Some(self.anchors[self.r.gen_range(0..self.anchors.len())].clone())
        } else {
            None
        };
        let _ = write!(out, " pos={}", vec_text(&pos));
        let prot: Matrix3<f64> = parent_world.fixed_view::<3, 3>(0, 0).into_owned();
        let world = match &reference {
            Some((node, anchor, point)) => {
                let _ = write!(out, " + {node}.{anchor}");
                let wp = point + Vector3::from(pos);
                homogeneous(prot * quat_matrix(quat), [wp.x, wp.y, wp.z])
            }
            None => parent_world * homogeneous(quat_matrix(quat), pos),
        };
        if quat != [1.0, 0.0, 0.0, 0.0] {
            let _ = write!(out, " quat={}", vec_text(&quat));
        }
        if kind == "box" {
            let size: Vec<f64> = (0..3).map(|_| round4(self.r.gen_range(0.001..0.2))).collect();
            let _ = write!(out, " size={}", vec_text(&size));
        }
        if kind == "body" && self.r.gen_bool(0.3) {
            let _ = write!(out, " joint=\"hinge\" axis=[0,0,1]");
        }
        let wpos = Vector3::new(world[(0, 3)], world[(1, 3)], world[(2, 3)]);
        if self.r.gen_bool(0.4) {
            let off = [round4(self.r.gen_range(-0.5..0.5)), round4(self.r.gen_range(-0.5..0.5)), round4(self.r.gen_range(-0.5..0.5))];
            let _ = write!(out, " anchor.a{i}={}", vec_text(&off));
            self.anchors.push((name.clone(), format!("a{i}"), wpos + Vector3::from(off)));
        }
        self.expected.insert(name, world);
        if kind == "body" {
            while self.count < self.max && self.r.gen_bool(0.6) {
                out.push(' ');
                self.node(world, depth + 1, out);
            }
        }
        out.push(')');
    }
}

pub fn random_scene(r: &mut Rng8, max_nodes: usize) -> GenScene {
    let mut g = SceneGen {
        r,
        count: 0,
        max: max_nodes,
        anchors: Vec::new(),
        expected: BTreeMap::new(),
        nodes: Vec::new(),
    };
    let mut text = String::from("(scene \"gen\"");
    let top = g.r.gen_range(0..=4);
    for _ in 0..top {
        if g.count >= g.max {
            break;
        }
        text.push_str("\n  ");
        g.node(Matrix4::identity(), 1, &mut text);
    }
    text.push_str(")\n");
    GenScene {
        text,
        expected_world: g.expected,
        nodes: g.nodes,
    }
}
