//! C ABI over the lucidforge engine.
//!
//! Conventions:
//! - Every fallible call returns an [`LfStatus`]; on failure a message is
//!   available from [`lf_last_error`] on the same thread.
//! - Objects are opaque handles created by `lf_*_new`/`lf_*_from_*` and
//!   released with the matching `lf_*_free`. Passing NULL to a free
//!   function is a no-op.
//! - Strings returned through `char **` are owned by the caller and must be
//!   released with [`lf_string_free`].
//! - Poses are `{p[3], q[4]}` with a scalar-first quaternion.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lucidforge::kinematics::{forward_kinematics, solve_ik, IkOptions, JointConfig, WeldTarget};
use lucidforge::scene::{emit_mjcf, parse_mjcf, parse_scene, resolve, KinematicTree};
use lucidforge::server::{ClientMsg, ErrorCode, ServerMsg, Session, TickConfig};
use lucidforge::{Pose, Rot6D};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    UnknownSite = 5,
    DimensionMismatch = 6,
    SolverFailure = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfPose {
    pub p: [f64; 3],
    /// Scalar-first unit quaternion.
    pub q: [f64; 4],
}

impl From<Pose> for LfPose {
    fn from(p: Pose) -> Self {
        LfPose {
            p: p.position_array(),
            q: p.quat_array(),
        }
    }
}

impl From<&LfPose> for Pose {
    fn from(p: &LfPose) -> Self {
        Pose::from_arrays(p.p, p.q)
    }
}

/// Opaque kinematic model.
pub struct LfTree(KinematicTree);

/// Opaque teleoperation session.
pub struct LfSession(Session);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type FfiResult<T> = Result<T, (LfStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> LfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LfStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> FfiResult<&'a str> {
    if s.is_null() {
        return Err((LfStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (LfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| (LfStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| (LfStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> FfiResult<&'a [f64]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((LfStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("interior NULs removed")
        .into_raw()
}

/// Message for the last failed call on this thread, or NULL. Free with
/// [`lf_string_free`].
#[no_mangle]
pub extern "C" fn lf_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(s) => s.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Compile scene text to MJCF XML.
#[no_mangle]
pub unsafe extern "C" fn lf_scene_compile(scene: *const c_char, out_xml: *mut *mut c_char) -> LfStatus {
    guard(|| {
        let text = str_arg(scene, "scene")?;
        let out = out_arg(out_xml, "out_xml")?;
        let parse = |e: lucidforge::scene::SceneError| (LfStatus::ParseError, e.to_string());
        let doc = resolve(&parse_scene(text).map_err(parse)?).map_err(parse)?;
        *out = to_c_string(emit_mjcf(&doc).map_err(parse)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_tree_from_mjcf(xml: *const c_char, out: *mut *mut LfTree) -> LfStatus {
    guard(|| {
        let xml = str_arg(xml, "xml")?;
        let out = out_arg(out, "out")?;
        let tree = parse_mjcf(xml).map_err(|e| (LfStatus::ParseError, e.to_string()))?;
        tree.validate().map_err(|e| (LfStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(LfTree(tree)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_tree_free(tree: *mut LfTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Number of joint coordinates, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_dof(tree: *const LfTree) -> usize {
    tree.as_ref().map_or(0, |t| t.0.dof())
}

#[no_mangle]
pub unsafe extern "C" fn lf_tree_site_count(tree: *const LfTree) -> usize {
    tree.as_ref().map_or(0, |t| t.0.sites.len())
}

fn site_index(tree: &KinematicTree, name: &str) -> FfiResult<usize> {
    tree.site_index(name)
        .ok_or_else(|| (LfStatus::UnknownSite, format!("unknown site '{name}'")))
}

fn joint_config(tree: &KinematicTree, q: &[f64]) -> FfiResult<JointConfig> {
    if q.len() != tree.dof() {
        return Err((
            LfStatus::DimensionMismatch,
            format!("expected {} joint values, got {}", tree.dof(), q.len()),
        ));
    }
    Ok(JointConfig(q.to_vec()))
}

/// World pose of `site` at configuration `q[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn lf_fk_site(
    tree: *const LfTree,
    q: *const f64,
    n: usize,
    site: *const c_char,
    out_pose: *mut LfPose,
) -> LfStatus {
    guard(|| {
        let tree = &ref_arg(tree, "tree")?.0;
        let q = joint_config(tree, slice_arg(q, n, "q")?)?;
        let site = site_index(tree, str_arg(site, "site")?)?;
        let out = out_arg(out_pose, "out_pose")?;
        let fk = forward_kinematics(tree, &q).map_err(|e| (LfStatus::InvalidArgument, e.to_string()))?;
        *out = fk.sites[site].into();
        Ok(())
    })
}

/// Damped least-squares IK for one site. Writes `n` joint values to
/// `q_out` and the final weighted residual to `residual_out` (may be NULL).
/// Not reaching the tolerance is not an error; inspect the residual.
#[no_mangle]
pub unsafe extern "C" fn lf_ik_solve(
    tree: *const LfTree,
    q0: *const f64,
    n: usize,
    site: *const c_char,
    target: *const LfPose,
    pos_weight: f64,
    rot_weight: f64,
    q_out: *mut f64,
    residual_out: *mut f64,
) -> LfStatus {
    guard(|| {
        let tree = &ref_arg(tree, "tree")?.0;
        let q0 = joint_config(tree, slice_arg(q0, n, "q0")?)?;
        let site = str_arg(site, "site")?;
        site_index(tree, site)?;
        let target: Pose = ref_arg(target, "target")?.into();
        if n > 0 && q_out.is_null() {
            return Err((LfStatus::NullPointer, "q_out is NULL".into()));
        }
        let weld = WeldTarget::new(site, target, pos_weight, rot_weight);
        let sol = solve_ik(tree, &q0, &[weld], &IkOptions::default())
            .map_err(|e| (LfStatus::SolverFailure, e.to_string()))?;
        if n > 0 {
            std::slice::from_raw_parts_mut(q_out, n).copy_from_slice(sol.q.as_slice());
        }
        if let Some(r) = residual_out.as_mut() {
            *r = sol.residual;
        }
        Ok(())
    })
}

/// Encode a scalar-first quaternion as the first two rotation-matrix
/// columns (6 values).
#[no_mangle]
pub unsafe extern "C" fn lf_rot6d_from_quat(q: *const f64, out6: *mut f64) -> LfStatus {
    guard(|| {
        let q = slice_arg(q, 4, "q")?;
        if out6.is_null() {
            return Err((LfStatus::NullPointer, "out6 is NULL".into()));
        }
        let pose = Pose::from_arrays([0.0; 3], [q[0], q[1], q[2], q[3]]);
        let r = Rot6D::from_quat(pose.rotation()).to_array();
        std::slice::from_raw_parts_mut(out6, 6).copy_from_slice(&r);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_rot6d_to_quat(r6: *const f64, out4: *mut f64) -> LfStatus {
    guard(|| {
        let r = slice_arg(r6, 6, "r6")?;
        if out4.is_null() {
            return Err((LfStatus::NullPointer, "out4 is NULL".into()));
        }
        let arr: [f64; 6] = r.try_into().expect("six values");
        let q = Rot6D::from_array(arr)
            .to_quat()
            .map_err(|e| (LfStatus::InvalidArgument, e.to_string()))?;
        let wxyz = lucidforge::se3::quat_to_wxyz(&q);
        std::slice::from_raw_parts_mut(out4, 4).copy_from_slice(&wxyz);
        Ok(())
    })
}

/// New session over a copy of `tree`; `decimation` must be in [5, 20].
#[no_mangle]
pub unsafe extern "C" fn lf_session_new(
    tree: *const LfTree,
    decimation: u32,
    out: *mut *mut LfSession,
) -> LfStatus {
    guard(|| {
        let tree = ref_arg(tree, "tree")?.0.clone();
        let out = out_arg(out, "out")?;
        let cfg = TickConfig::with_decimation(decimation)
            .map_err(|e| (LfStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(LfSession(Session::new("ffi", tree, cfg, "", ""))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_session_free(session: *mut LfSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

fn replies_json(msgs: &[ServerMsg]) -> String {
    serde_json::to_string(msgs).expect("messages serialize")
}

/// Apply one protocol message (JSON text). Replies, possibly an empty
/// list, are written as a JSON array to `out_json`. Malformed messages are
/// answered with an error message, not a failing status.
#[no_mangle]
pub unsafe extern "C" fn lf_session_handle(
    session: *mut LfSession,
    msg_json: *const c_char,
    out_json: *mut *mut c_char,
) -> LfStatus {
    guard(|| {
        let s = &mut out_arg(session, "session")?.0;
        let text = str_arg(msg_json, "msg_json")?;
        let out = out_arg(out_json, "out_json")?;
        let replies = match ClientMsg::parse(text) {
            Ok(m) => s.handle_message(&m),
            Err(e) => vec![ServerMsg::error(ErrorCode::Malformed, e)],
        };
        *out = to_c_string(replies_json(&replies));
        Ok(())
    })
}

/// Advance one tick; the outbound messages (state, plus any error) are
/// written as a JSON array to `out_json`.
#[no_mangle]
pub unsafe extern "C" fn lf_session_tick(session: *mut LfSession, out_json: *mut *mut c_char) -> LfStatus {
    guard(|| {
        let s = &mut out_arg(session, "session")?.0;
        let out = out_arg(out_json, "out_json")?;
        *out = to_c_string(replies_json(&s.tick()));
        Ok(())
    })
}

/// Completed recordings as episode files joined by a blank line; an empty
/// string if none.
#[no_mangle]
pub unsafe extern "C" fn lf_session_take_episodes(
    session: *mut LfSession,
    out_text: *mut *mut c_char,
) -> LfStatus {
    guard(|| {
        let s = &mut out_arg(session, "session")?.0;
        let out = out_arg(out_text, "out_text")?;
        let mut text = String::new();
        for ep in s.take_finished() {
            let bytes = ep.save().map_err(|e| (LfStatus::InvalidArgument, e.to_string()))?;
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(&String::from_utf8(bytes).expect("episodes are UTF-8"));
        }
        *out = to_c_string(text);
        Ok(())
    })
}
