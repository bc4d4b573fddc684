use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::se3::Pose;

/// Magic for depth files: then u32 LE width, u32 LE height, row-major f32
/// LE depths with non-positive or non-finite values marking invalid pixels.
pub const DEPTH_MAGIC: &[u8; 8] = b"LFDEPTH1";
/// Magic for flow files: then u32 LE width, u32 LE height, row-major
/// `(du, dv)` f32 LE pairs with NaN marking invalid pixels.
pub const FLOW_MAGIC: &[u8; 8] = b"LFFLOW01";

/// Pinhole camera looking down its local −z with x right and y up; image
/// rows grow downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera-to-world.
    pub pose: Pose,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && 0.0 < self.cx
            && self.cx < self.width as f64
            && 0.0 < self.cy
            && self.cy < self.height as f64
            && self.pose.is_finite();
        if ok {
            Ok(())
        } else {
            Err(AugmentError::InvalidCamera(format!("{self:?}")))
        }
    }

    pub fn from_json(text: &str) -> Result<Self, AugmentError> {
        let cam: CameraModel =
            serde_json::from_str(text).map_err(|e| AugmentError::InvalidCamera(e.to_string()))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("camera serializes")
    }

    /// Camera-frame point for pixel `(u, v)` at depth `d` along −z.
    pub fn back_project(&self, u: f64, v: f64, d: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * d, -(v - self.cy) / self.fy * d, -d)
    }

    /// Pixel and depth of a camera-frame point, or `None` behind the camera.
    pub fn project(&self, x: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let d = -x.z;
        if !(d > 0.0) {
            return None;
        }
        Some((self.cx + self.fx * x.x / d, self.cy - self.fy * x.y / d, d))
    }

    fn in_frame(&self, u: f64, v: f64) -> bool {
        (0.0..=(self.width - 1) as f64).contains(&u) && (0.0..=(self.height - 1) as f64).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    /// Validity is derived: a pixel is valid when its depth is finite and positive.
    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self, AugmentError> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(AugmentError::BadFile(format!(
                "{} depth values for {width}x{height}",
                values.len()
            )));
        }
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn constant(width: u32, height: u32, depth: f64) -> Self {
        Self::from_values(width, height, vec![depth; (width * height) as usize]).expect("sized")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(DEPTH_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for (d, ok) in self.values.iter().zip(&self.valid) {
            let v = if *ok { *d as f32 } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AugmentError> {
        let (w, h, body) = read_header(bytes, DEPTH_MAGIC, 4)?;
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Self::from_values(w, h, values)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, AugmentError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| AugmentError::BadFile(e.to_string()))?;
        Self::from_bytes(&buf)
    }
}

fn read_header<'a>(
    bytes: &'a [u8],
    magic: &[u8; 8],
    bytes_per_pixel: usize,
) -> Result<(u32, u32, &'a [u8]), AugmentError> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(AugmentError::BadFile(format!(
            "missing {} header",
            String::from_utf8_lossy(magic)
        )));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let h = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let body = &bytes[16..];
    let expected = (w as usize) * (h as usize) * bytes_per_pixel;
    if body.len() != expected {
        return Err(AugmentError::BadFile(format!(
            "{w}x{h} needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    Ok((w, h, body))
}

/// Per-pixel displacement from a source view to a target view, indexed by
/// source pixel. `depth` holds each point's depth in the target view and
/// drives occlusion ordering when splatting.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub valid: Vec<bool>,
    pub depth: Vec<f64>,
}

impl FlowField {
    /// Same displacement everywhere, all pixels valid at unit depth.
    pub fn uniform(width: u32, height: u32, du: f64, dv: f64) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            du: vec![du; n],
            dv: vec![dv; n],
            valid: vec![true; n],
            depth: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.du.len()
    }

    pub fn is_empty(&self) -> bool {
        self.du.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Mean displacement magnitude over valid pixels (0 when none are valid).
    pub fn mean_magnitude(&self) -> f64 {
        let (sum, n) = self
            .iter_valid()
            .fold((0.0, 0usize), |(s, n), (_, du, dv)| (s + du.hypot(dv), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Mean `(du, dv)` over valid pixels.
    pub fn mean(&self) -> (f64, f64) {
        let (su, sv, n) = self
            .iter_valid()
            .fold((0.0, 0.0, 0usize), |(a, b, n), (_, du, dv)| (a + du, b + dv, n + 1));
        if n == 0 {
            (0.0, 0.0)
        } else {
            (su / n as f64, sv / n as f64)
        }
    }

    /// `(pixel index, du, dv)` for every valid pixel.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.len())
            .filter(|&i| self.valid[i])
            .map(|i| (i, self.du[i], self.dv[i]))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut out = Vec::with_capacity(16 + 8 * self.len());
        out.extend_from_slice(FLOW_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for i in 0..self.len() {
            let (du, dv) = if self.valid[i] {
                (self.du[i] as f32, self.dv[i] as f32)
            } else {
                (f32::NAN, f32::NAN)
            };
            out.extend_from_slice(&du.to_le_bytes());
            out.extend_from_slice(&dv.to_le_bytes());
        }
        w.write_all(&out)
    }

    /// Reads a flow file; target depths are not stored and come back as 1.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AugmentError> {
        let (w, h, body) = read_header(bytes, FLOW_MAGIC, 8)?;
        let mut flow = FlowField::uniform(w, h, 0.0, 0.0);
        for (i, c) in body.chunks_exact(8).enumerate() {
            let du = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
            let dv = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
            flow.valid[i] = du.is_finite() && dv.is_finite();
            flow.du[i] = if flow.valid[i] { du as f64 } else { 0.0 };
            flow.dv[i] = if flow.valid[i] { dv as f64 } else { 0.0 };
        }
        Ok(flow)
    }
}

/// Flow from `cam_a` to `cam_b` given `cam_a`'s depth.
pub fn reproject(
    depth: &DepthMap,
    cam_a: &CameraModel,
    cam_b: &CameraModel,
) -> Result<FlowField, AugmentError> {
    if (depth.width, depth.height) != (cam_a.width, cam_a.height) {
        return Err(AugmentError::DimensionMismatch {
            expected: (cam_a.width, cam_a.height),
            got: (depth.width, depth.height),
        });
    }
    cam_a.validate()?;
    cam_b.validate()?;
    let n = depth.values.len();
    let mut flow = FlowField {
        width: depth.width,
        height: depth.height,
        du: vec![0.0; n],
        dv: vec![0.0; n],
        valid: vec![false; n],
        depth: vec![0.0; n],
    };
    // Same camera: every valid pixel maps onto itself. Handled exactly
    // rather than through a lossy back-project/project round trip.
    if cam_a == cam_b {
        flow.valid.clone_from(&depth.valid);
        for (i, d) in depth.values.iter().enumerate() {
            if depth.valid[i] {
                flow.depth[i] = *d;
            }
        }
        return Ok(flow);
    }
    // Points go camera a → world → camera b in one rigid transform.
    let rel = cam_b.pose.inverse().compose(&cam_a.pose);
    let r: Matrix3<f64> = rel.rotation_matrix();
    let t = *rel.position();

    let w = depth.width as usize;
    for i in 0..n {
        if !depth.valid[i] {
            continue;
        }
        let (u, v) = ((i % w) as f64, (i / w) as f64);
        let xa = cam_a.back_project(u, v, depth.values[i]);
        let xb = r * xa + t;
        let Some((ub, vb, db)) = cam_b.project(&xb) else {
            continue;
        };
        if !cam_b.in_frame(ub, vb) {
            continue;
        }
        flow.du[i] = ub - u;
        flow.dv[i] = vb - v;
        flow.depth[i] = db;
        flow.valid[i] = true;
    }
    Ok(flow)
}
