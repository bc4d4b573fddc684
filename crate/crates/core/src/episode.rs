//! Episode recording, the JSON-lines file format, replay and resampling.
//!
//! File layout, UTF-8 with LF line endings:
//!
//! ```text
//! {"lucidforge_episode":1,"rate_hz":25,"scene_hash":"…","model_hash":"…"}
//! {"t":0,"mocap":{"site":{"p":[x,y,z],"r6":[6 numbers]}},"q":[…],"action":{…},"attachments":[["obj","site"]]}
//! …
//! ```
//!
//! Orientations are stored as the first two rotation-matrix columns,
//! concatenated. Floats use the shortest decimal that round-trips.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Deserialize;
use thiserror::Error;

use crate::kinematics::JointConfig;
use crate::se3::{lerp_pose, Pose, Rot6D};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_RATE_HZ: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("NonMonotoneTime: frame at t={t} does not follow t={last}")]
    NonMonotoneTime { last: f64, t: f64 },
    #[error("PacingViolation: gap {gap} s at t={t} (rate {rate} Hz)")]
    PacingViolation { t: f64, gap: f64, rate: f64 },
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("UnsupportedVersion {0}")]
    UnsupportedVersion(String),
    #[error("CorruptFrame at line {line}: {message}")]
    CorruptFrame { line: usize, message: String },
    #[error("episode has no frames")]
    Empty,
    #[error("UpsampleUnsupported: {from} Hz -> {to} Hz")]
    UpsampleUnsupported { from: f64, to: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    /// Observed poses keyed by site (or free-object body) name.
    pub mocap: BTreeMap<String, Pose>,
    pub q: JointConfig,
    /// Commanded absolute targets keyed by site name.
    pub action: BTreeMap<String, Pose>,
    /// Active grasp welds as `(object body, gripper site)`.
    pub attachments: Vec<(String, String)>,
}

impl Frame {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            mocap: BTreeMap::new(),
            q: JointConfig::default(),
            action: BTreeMap::new(),
            attachments: Vec::new(),
        }
    }

    fn schema_matches(&self, other: &Frame) -> Result<(), String> {
        if !self.mocap.keys().eq(other.mocap.keys()) {
            return Err("mocap key set changed".into());
        }
        if !self.action.keys().eq(other.action.keys()) {
            return Err("action key set changed".into());
        }
        if self.q.len() != other.q.len() {
            return Err(format!(
                "joint count changed from {} to {}",
                self.q.len(),
                other.q.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMeta {
    pub version: u32,
    pub rate_hz: f64,
    pub scene_hash: String,
    pub model_hash: String,
    /// Seconds since the Unix epoch; absent for virtual-time recordings.
    pub created: Option<u64>,
}

impl EpisodeMeta {
    pub fn new(scene_hash: impl Into<String>, model_hash: impl Into<String>) -> Self {
        Self {
            version: FORMAT_VERSION,
            rate_hz: DEFAULT_RATE_HZ,
            scene_hash: scene_hash.into(),
            model_hash: model_hash.into(),
            created: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub meta: EpisodeMeta,
    pub frames: Vec<Frame>,
}

impl Episode {
    pub fn new(meta: EpisodeMeta) -> Self {
        Self {
            meta,
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Time covered by the frames, counting the last frame's period.
    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.t - a.t + 1.0 / self.meta.rate_hz,
            _ => 0.0,
        }
    }

    fn check_append(&self, f: &Frame) -> Result<(), EpisodeError> {
        if !f.t.is_finite() {
            return Err(EpisodeError::SchemaMismatch("non-finite timestamp".into()));
        }
        let Some(last) = self.frames.last() else {
            return Ok(());
        };
        if f.t <= last.t {
            return Err(EpisodeError::NonMonotoneTime { last: last.t, t: f.t });
        }
        let rate = self.meta.rate_hz;
        let gap = f.t - last.t;
        if (gap - 1.0 / rate).abs() > 0.5 / rate {
            return Err(EpisodeError::PacingViolation { t: f.t, gap, rate });
        }
        self.frames[0]
            .schema_matches(f)
            .map_err(EpisodeError::SchemaMismatch)
    }

    pub fn append_frame(&mut self, f: Frame) -> Result<(), EpisodeError> {
        self.check_append(&f)?;
        self.frames.push(f);
        Ok(())
    }

    /// Check every invariant from scratch.
    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.frames.is_empty() {
            return Err(EpisodeError::Empty);
        }
        let mut probe = Episode::new(self.meta.clone());
        for f in &self.frames {
            probe.check_append(f)?;
            probe.frames.push(f.clone());
        }
        Ok(())
    }

    pub fn save(&self) -> Result<Vec<u8>, EpisodeError> {
        if self.frames.is_empty() {
            return Err(EpisodeError::Empty);
        }
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"lucidforge_episode\":{},\"rate_hz\":{},\"scene_hash\":{},\"model_hash\":{}",
            self.meta.version,
            num(self.meta.rate_hz),
            json_str(&self.meta.scene_hash),
            json_str(&self.meta.model_hash)
        );
        if let Some(c) = self.meta.created {
            let _ = write!(out, ",\"created\":{c}");
        }
        out.push_str("}\n");
        for f in &self.frames {
            write_frame(&mut out, f);
            out.push('\n');
        }
        Ok(out.into_bytes())
    }

    pub fn load(bytes: &[u8]) -> Result<Episode, EpisodeError> {
        let text = std::str::from_utf8(bytes).map_err(|e| EpisodeError::CorruptFrame {
            line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
            message: "invalid UTF-8".into(),
        })?;
        let mut lines = text.split('\n').enumerate().peekable();
        let (_, header) = lines.next().ok_or(EpisodeError::Empty)?;
        let header: RawHeader = serde_json::from_str(header).map_err(|e| EpisodeError::CorruptFrame {
            line: 1,
            message: e.to_string(),
        })?;
        if header.lucidforge_episode != FORMAT_VERSION as u64 {
            return Err(EpisodeError::UnsupportedVersion(header.lucidforge_episode.to_string()));
        }
        if !(header.rate_hz > 0.0 && header.rate_hz.is_finite()) {
            return Err(EpisodeError::CorruptFrame {
                line: 1,
                message: "rate_hz must be positive".into(),
            });
        }
        let mut ep = Episode::new(EpisodeMeta {
            version: FORMAT_VERSION,
            rate_hz: header.rate_hz,
            scene_hash: header.scene_hash,
            model_hash: header.model_hash,
            created: header.created,
        });
        while let Some((i, line)) = lines.next() {
            let line_no = i + 1;
            if line.is_empty() && lines.peek().is_none() {
                break;
            }
            let corrupt = |message: String| EpisodeError::CorruptFrame {
                line: line_no,
                message,
            };
            let raw: RawFrame = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            let frame = raw.into_frame().map_err(corrupt)?;
            ep.append_frame(frame).map_err(|e| corrupt(e.to_string()))?;
        }
        if ep.frames.is_empty() {
            return Err(EpisodeError::Empty);
        }
        Ok(ep)
    }
}

fn num(v: f64) -> String {
    serde_json::to_string(&v).expect("finite float")
        .trim_end_matches(".0")
        .to_string()
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn write_nums(out: &mut String, v: &[f64]) {
    out.push('[');
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&num(*x));
    }
    out.push(']');
}

fn write_pose(out: &mut String, p: &Pose) {
    out.push_str("{\"p\":");
    write_nums(out, &p.position_array());
    out.push_str(",\"r6\":");
    write_nums(out, &Rot6D::from_quat(p.rotation()).to_array());
    out.push('}');
}

fn write_pose_map(out: &mut String, m: &BTreeMap<String, Pose>) {
    out.push('{');
    for (i, (k, p)) in m.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&json_str(k));
        out.push(':');
        write_pose(out, p);
    }
    out.push('}');
}

fn write_frame(out: &mut String, f: &Frame) {
    out.push_str("{\"t\":");
    out.push_str(&num(f.t));
    out.push_str(",\"mocap\":");
    write_pose_map(out, &f.mocap);
    out.push_str(",\"q\":");
    write_nums(out, f.q.as_slice());
    out.push_str(",\"action\":");
    write_pose_map(out, &f.action);
    out.push_str(",\"attachments\":[");
    for (i, (obj, site)) in f.attachments.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "[{},{}]", json_str(obj), json_str(site));
    }
    out.push_str("]}");
}

#[derive(Deserialize)]
struct RawHeader {
    lucidforge_episode: u64,
    rate_hz: f64,
    scene_hash: String,
    model_hash: String,
    #[serde(default)]
    created: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    p: [f64; 3],
    r6: [f64; 6],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    t: f64,
    mocap: BTreeMap<String, RawPose>,
    q: Vec<f64>,
    action: BTreeMap<String, RawPose>,
    attachments: Vec<(String, String)>,
}

impl RawPose {
    fn into_pose(self, key: &str) -> Result<Pose, String> {
        let rot = Rot6D::from_array(self.r6)
            .to_quat()
            .map_err(|e| format!("pose '{key}': {e}"))?;
        let pose = Pose::new(self.p.into(), rot);
        if !pose.is_finite() {
            return Err(format!("pose '{key}' is not finite"));
        }
        Ok(pose)
    }
}

impl RawFrame {
    fn into_frame(self) -> Result<Frame, String> {
        let convert = |m: BTreeMap<String, RawPose>| -> Result<BTreeMap<String, Pose>, String> {
            m.into_iter()
                .map(|(k, p)| p.into_pose(&k).map(|pose| (k, pose)))
                .collect()
        };
        Ok(Frame {
            t: self.t,
            mocap: convert(self.mocap)?,
            q: JointConfig(self.q),
            action: convert(self.action)?,
            attachments: self.attachments,
        })
    }
}

/// Paced playback of an episode; see [`replay`].
pub struct Replay<'a> {
    ep: &'a Episode,
    next: usize,
    multiplier: f64,
    start: Option<Instant>,
}

impl<'a> Iterator for Replay<'a> {
    type Item = (f64, &'a Frame);

    fn next(&mut self) -> Option<Self::Item> {
        let frame = self.ep.frames.get(self.next)?;
        self.next += 1;
        if self.multiplier.is_finite() {
            let start = *self.start.get_or_insert_with(Instant::now);
            let due = (frame.t - self.ep.frames[0].t) / self.multiplier;
            let elapsed = start.elapsed().as_secs_f64();
            if due > elapsed {
                std::thread::sleep(Duration::from_secs_f64(due - elapsed));
            }
        }
        Some((frame.t, frame))
    }
}

/// Deliver frames in order, paced at `rate_multiplier` times recorded speed;
/// `f64::INFINITY` replays as fast as possible.
///
/// Panics if `rate_multiplier` is not positive.
pub fn replay(ep: &Episode, rate_multiplier: f64) -> Replay<'_> {
    assert!(rate_multiplier > 0.0, "rate multiplier must be positive");
    Replay {
        ep,
        next: 0,
        multiplier: rate_multiplier,
        start: None,
    }
}

/// Downsample onto a uniform grid at `new_rate_hz`, interpolating poses
/// with [`lerp_pose`] and joints linearly; attachments come from the
/// earlier bracketing frame.
pub fn resample(ep: &Episode, new_rate_hz: f64) -> Result<Episode, EpisodeError> {
    if ep.frames.is_empty() {
        return Err(EpisodeError::Empty);
    }
    if new_rate_hz == ep.meta.rate_hz {
        return Ok(ep.clone());
    }
    if !(new_rate_hz > 0.0) || new_rate_hz > ep.meta.rate_hz {
        return Err(EpisodeError::UpsampleUnsupported {
            from: ep.meta.rate_hz,
            to: new_rate_hz,
        });
    }
    let t0 = ep.frames[0].t;
    let t_end = ep.frames.last().expect("non-empty").t;
    let mut out = Episode::new(EpisodeMeta {
        rate_hz: new_rate_hz,
        ..ep.meta.clone()
    });
    let mut seg = 0usize;
    for k in 0.. {
        let t = t0 + k as f64 / new_rate_hz;
        if t > t_end + 1e-9 {
            break;
        }
        while seg + 1 < ep.frames.len() && ep.frames[seg + 1].t <= t {
            seg += 1;
        }
        let a = &ep.frames[seg];
        let frame = match ep.frames.get(seg + 1) {
            Some(b) if t > a.t => {
                let s = (t - a.t) / (b.t - a.t);
                let lerp_map = |ma: &BTreeMap<String, Pose>, mb: &BTreeMap<String, Pose>| {
                    ma.iter()
                        .map(|(k, pa)| (k.clone(), lerp_pose(pa, mb.get(k).unwrap_or(pa), s)))
                        .collect()
                };
                Frame {
                    t,
                    mocap: lerp_map(&a.mocap, &b.mocap),
                    q: JointConfig(
                        a.q.0.iter()
                            .zip(&b.q.0)
                            .map(|(x, y)| x + (y - x) * s)
                            .collect(),
                    ),
                    action: lerp_map(&a.action, &b.action),
                    attachments: a.attachments.clone(),
                }
            }
            _ => Frame { t, ..a.clone() },
        };
        out.frames.push(frame);
    }
    Ok(out)
}
