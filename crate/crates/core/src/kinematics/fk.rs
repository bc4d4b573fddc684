use std::collections::BTreeMap;

use nalgebra::{Unit, UnitQuaternion};

use super::{JointConfig, KinematicsError};
use crate::scene::{JointType, KinematicTree};
use crate::se3::Pose;

/// Per-body joint lists with their coordinate indices, computed once per
/// tree and reused across FK evaluations.
#[derive(Debug, Clone)]
pub struct FkLayout {
    /// `(joint index, coordinate index)` for each body, in joint order.
    body_joints: Vec<Vec<(usize, Option<usize>)>>,
    dof: usize,
}

impl FkLayout {
    pub fn new(tree: &KinematicTree) -> Self {
        let mut body_joints = vec![Vec::new(); tree.bodies.len()];
        let mut dof = 0;
        for (i, j) in tree.joints.iter().enumerate() {
            let coord = if j.kind == JointType::Free {
                None
            } else {
                dof += 1;
                Some(dof - 1)
            };
            body_joints[j.body].push((i, coord));
        }
        Self { body_joints, dof }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }
}

/// World poses of every body and site.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub bodies: Vec<Pose>,
    pub sites: Vec<Pose>,
}

impl Kinematics {
    pub fn site(&self, tree: &KinematicTree, name: &str) -> Option<Pose> {
        tree.site_index(name).map(|i| self.sites[i])
    }

    pub fn body(&self, tree: &KinematicTree, name: &str) -> Option<Pose> {
        tree.body_index(name).map(|i| self.bodies[i])
    }

    /// Name-keyed view; sites win on a name collision with a body.
    pub fn to_map(&self, tree: &KinematicTree) -> BTreeMap<String, Pose> {
        let mut m = BTreeMap::new();
        for (b, p) in tree.bodies.iter().zip(&self.bodies) {
            m.insert(b.name.clone(), *p);
        }
        for (s, p) in tree.sites.iter().zip(&self.sites) {
            m.insert(s.name.clone(), *p);
        }
        m
    }
}

/// World pose of each body is `parent ∘ rest ∘ joint transforms`; site
/// poses are `body ∘ local`.
pub fn forward_kinematics(
    tree: &KinematicTree,
    q: &JointConfig,
) -> Result<Kinematics, KinematicsError> {
    forward_kinematics_with(tree, &FkLayout::new(tree), q, &BTreeMap::new())
}

/// FK with externally set world poses for some bodies (free objects and
/// mocap bodies); descendants follow their overridden ancestor.
pub fn forward_kinematics_with(
    tree: &KinematicTree,
    layout: &FkLayout,
    q: &JointConfig,
    overrides: &BTreeMap<usize, Pose>,
) -> Result<Kinematics, KinematicsError> {
    if q.len() != layout.dof {
        return Err(KinematicsError::DimensionMismatch {
            expected: layout.dof,
            got: q.len(),
        });
    }
    let mut bodies: Vec<Pose> = Vec::with_capacity(tree.bodies.len());
    for (i, body) in tree.bodies.iter().enumerate() {
        if let Some(p) = overrides.get(&i) {
            bodies.push(*p);
            continue;
        }
        let mut pose = match body.parent {
            Some(p) => bodies[p].compose(&body.rest),
            None => body.rest,
        };
        for &(ji, coord) in &layout.body_joints[i] {
            let Some(c) = coord else { continue };
            let joint = &tree.joints[ji];
            let v = q.0[c];
            let step = match joint.kind {
                JointType::Hinge => Pose::from_rotation(UnitQuaternion::from_axis_angle(
                    &Unit::new_unchecked(joint.axis),
                    v,
                )),
                JointType::Slide => Pose::new(joint.axis * v, UnitQuaternion::identity()),
                JointType::Free => continue,
            };
            pose = pose.compose(&step);
        }
        bodies.push(pose);
    }
    let sites = tree
        .sites
        .iter()
        .map(|s| match s.body {
            Some(b) => bodies[b].compose(&s.local),
            None => s.local,
        })
        .collect();
    Ok(Kinematics { bodies, sites })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::parse_mjcf;
    use nalgebra::{Matrix4, Vector3};
    use std::f64::consts::FRAC_PI_2;

    const PLANAR: &str = r#"<mujoco><compiler angle="radian"/><worldbody>
        <body name="l1"><joint name="j1" axis="0 0 1"/>
          <body name="l2" pos="1 0 0"><joint name="j2" axis="0 0 1"/>
            <site name="ee" pos="1 0 0"/>
          </body>
        </body></worldbody></mujoco>"#;

    fn hinge_z(angle: f64) -> Matrix4<f64> {
        let (s, c) = angle.sin_cos();
        Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    }

    fn translate(x: f64, y: f64, z: f64) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m[(0, 3)] = x;
        m[(1, 3)] = y;
        m[(2, 3)] = z;
        m
    }

    #[test]
    fn zero_config_composes_rest_poses() {
        let t = parse_mjcf(PLANAR).unwrap();
        let k = forward_kinematics(&t, &JointConfig::zeros(&t)).unwrap();
        assert_eq!(k.site(&t, "ee").unwrap(), Pose::from_translation(2.0, 0.0, 0.0));
    }

    #[test]
    fn planar_chain_matches_matrix_product() {
        let t = parse_mjcf(PLANAR).unwrap();
        let k = forward_kinematics(&t, &JointConfig(vec![FRAC_PI_2, 0.0])).unwrap();
        let ee = k.site(&t, "ee").unwrap();
        let oracle = hinge_z(FRAC_PI_2) * translate(1.0, 0.0, 0.0) * hinge_z(0.0) * translate(1.0, 0.0, 0.0);
        let expected = Vector3::new(oracle[(0, 3)], oracle[(1, 3)], oracle[(2, 3)]);
        assert!((ee.position() - expected).norm() < 1e-12);
        assert!((ee.position() - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let t = parse_mjcf(PLANAR).unwrap();
        assert_eq!(
            forward_kinematics(&t, &JointConfig(vec![0.0])),
            Err(KinematicsError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn overrides_move_subtree() {
        let t = parse_mjcf(PLANAR).unwrap();
        let mut o = BTreeMap::new();
        o.insert(1, Pose::from_translation(5.0, 0.0, 0.0));
        let k = forward_kinematics_with(&t, &FkLayout::new(&t), &JointConfig(vec![0.3, 0.0]), &o)
            .unwrap();
        assert_eq!(k.site(&t, "ee").unwrap(), Pose::from_translation(6.0, 0.0, 0.0));
    }
}
