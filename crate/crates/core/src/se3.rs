//! Rigid transforms, the 6D rotation encoding, and interpolation.
//!
//! Quaternions are scalar-first `(w, x, y, z)` and kept in a canonical
//! hemisphere (`w >= 0`, ties broken by the first nonzero component being
//! positive) so that two equal rotations always compare equal.

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Below this half-angle (rad) slerp falls back to normalized lerp.
const SLERP_EPSILON: f64 = 1e-6;
/// Column norm below which a 6D rotation is considered degenerate.
const ROT6D_DEGENERACY: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("degenerate 6D rotation: columns are zero or parallel")]
    DegenerateRot6D,
    #[error("non-finite pose component")]
    NonFinite,
}

/// Bring a quaternion to unit norm and the canonical hemisphere.
pub fn canonical_quat(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let n = q.norm();
    let mut q = if n > 0.0 && n.is_finite() {
        q / n
    } else {
        Quaternion::identity()
    };
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else if q.i != 0.0 {
        q.i < 0.0
    } else if q.j != 0.0 {
        q.j < 0.0
    } else {
        q.k < 0.0
    };
    if flip {
        q = -q;
    }
    UnitQuaternion::new_unchecked(q)
}

/// Quaternion from scalar-first components.
pub fn quat_wxyz(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion<f64> {
    canonical_quat(Quaternion::new(w, x, y, z))
}

/// Scalar-first components of a unit quaternion.
pub fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// An element of SE(3): a translation in meters and a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    position: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            rotation: canonical_quat(rotation.into_inner()),
        }
    }

    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(Vector3::zeros(), rotation)
    }

    /// Pure rotation about an axis through the origin.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self::from_rotation(UnitQuaternion::from_axis_angle(&axis, angle))
    }

    /// Build from a position array and a scalar-first quaternion array.
    pub fn from_arrays(p: [f64; 3], q: [f64; 4]) -> Self {
        Self {
            position: Vector3::new(p[0], p[1], p[2]),
            rotation: quat_wxyz(q[0], q[1], q[2], q[3]),
        }
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn position_array(&self) -> [f64; 3] {
        [self.position.x, self.position.y, self.position.z]
    }

    pub fn quat_array(&self) -> [f64; 4] {
        quat_to_wxyz(&self.rotation)
    }

    pub fn with_position(mut self, position: Vector3<f64>) -> Self {
        self.position = position;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }

    /// Exact identity check (signed zeros compare equal).
    pub fn is_identity(&self) -> bool {
        self.position == Vector3::zeros() && self.rotation.into_inner() == Quaternion::identity()
    }

    /// Group product `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.rotation * other.position,
            self.rotation * other.rotation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.rotation * p
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Inverse of [`Pose::to_homogeneous`]; the rotation block is
    /// re-orthonormalized through the 6D decoder.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Pose, Se3Error> {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let rot = Rot6D::from_matrix(&r).to_quat()?;
        Ok(Pose::new(m.fixed_view::<3, 1>(0, 3).into_owned(), rot))
    }

    /// Angle (rad) of the relative rotation between two poses.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

/// Angular distance between two unit quaternions, insensitive to sign.
pub fn rotation_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// The continuous 6D rotation encoding: the first two columns of the
/// rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D {
    pub a1: Vector3<f64>,
    pub a2: Vector3<f64>,
}

impl Rot6D {
    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            a1: Vector3::new(v[0], v[1], v[2]),
            a2: Vector3::new(v[3], v[4], v[5]),
        }
    }

    /// Column concatenation `(a1, a2)`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.a1.x, self.a1.y, self.a1.z, self.a2.x, self.a2.y, self.a2.z,
        ]
    }

    pub fn from_quat(q: &UnitQuaternion<f64>) -> Self {
        Self::from_matrix(q.to_rotation_matrix().matrix())
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self {
            a1: m.column(0).into_owned(),
            a2: m.column(1).into_owned(),
        }
    }

    /// Gram–Schmidt decode to a proper rotation matrix.
    pub fn to_matrix(&self) -> Result<Matrix3<f64>, Se3Error> {
        if !self.a1.iter().chain(self.a2.iter()).all(|v| v.is_finite()) {
            return Err(Se3Error::NonFinite);
        }
        let n1 = self.a1.norm();
        if n1 <= ROT6D_DEGENERACY {
            return Err(Se3Error::DegenerateRot6D);
        }
        let b1 = self.a1 / n1;
        let perp = self.a2 - b1 * b1.dot(&self.a2);
        let n2 = perp.norm();
        if n2 <= ROT6D_DEGENERACY {
            return Err(Se3Error::DegenerateRot6D);
        }
        let b2 = perp / n2;
        let b3 = b1.cross(&b2);
        Ok(Matrix3::from_columns(&[b1, b2, b3]))
    }

    pub fn to_quat(&self) -> Result<UnitQuaternion<f64>, Se3Error> {
        let m = self.to_matrix()?;
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        Ok(canonical_quat(q.into_inner()))
    }
}

pub fn rot_to_6d(q: &UnitQuaternion<f64>) -> Rot6D {
    Rot6D::from_quat(q)
}

pub fn rot_from_6d(r: &Rot6D) -> Result<UnitQuaternion<f64>, Se3Error> {
    r.to_quat()
}

/// Spatial error between two poses: linear part in the world frame,
/// angular part as an axis-angle vector in the frame of the first pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self {
            linear: Vector3::zeros(),
            angular: Vector3::zeros(),
        }
    }

    /// Twist that carries `from` onto `to`.
    pub fn between(from: &Pose, to: &Pose) -> Self {
        let rel = from.rotation.inverse() * to.rotation;
        Self {
            linear: to.position - from.position,
            angular: rel.scaled_axis(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

/// Shortest-path spherical interpolation at constant angular velocity.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    if q0 == q1 {
        return *q0;
    }
    let a = q0.into_inner();
    let mut b = q1.into_inner();
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let theta = dot.min(1.0).acos();
    let q = if theta < SLERP_EPSILON {
        a * (1.0 - t) + b * t
    } else {
        let s = theta.sin();
        a * (((1.0 - t) * theta).sin() / s) + b * ((t * theta).sin() / s)
    };
    canonical_quat(q)
}

/// Linear interpolation of position with slerp of orientation.
pub fn lerp_pose(p0: &Pose, p1: &Pose, t: f64) -> Pose {
    if p0 == p1 {
        return *p0;
    }
    Pose::new(
        p0.position + (p1.position - p0.position) * t,
        slerp(&p0.rotation, &p1.rotation, t),
    )
}

/// JSON form `{"p":[x,y,z],"q":[w,x,y,z]}` used on the wire and in camera files.
#[derive(Serialize, Deserialize)]
struct PoseJson {
    p: [f64; 3],
    q: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseJson {
            p: self.position_array(),
            q: self.quat_array(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = PoseJson::deserialize(d)?;
        let n = j.q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 1e-9) || !n.is_finite() || j.p.iter().any(|v| !v.is_finite()) {
            return Err(D::Error::custom("pose must be finite with a nonzero quaternion"));
        }
        Ok(Pose::from_arrays(j.p, j.q))
    }
}
