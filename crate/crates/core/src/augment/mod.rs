//! Data multipliers: keypoint trajectory warping and camera repositioning
//! by depth reprojection.

mod camera;
mod splat;

pub use camera::{reproject, CameraModel, DepthMap, FlowField, DEPTH_MAGIC, FLOW_MAGIC};
pub use splat::{warp_image, WarpedImage, DEPTH_TOLERANCE};

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::episode::Episode;
use crate::se3::{lerp_pose, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("EpisodeTooShort: {frames} frames for {keypoints} keypoints")]
    EpisodeTooShort { frames: usize, keypoints: usize },
    #[error("SpecMismatch: {0}")]
    SpecMismatch(String),
    #[error("DimensionMismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("bad file: {0}")]
    BadFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WarpBounds {
    /// Translation radius (m).
    pub max_trans: f64,
    /// Rotation angle limit (rad).
    pub max_rot: f64,
}

impl WarpBounds {
    pub fn new(max_trans: f64, max_rot: f64) -> Result<Self, AugmentError> {
        if !(max_trans >= 0.0 && max_trans.is_finite() && max_rot >= 0.0 && max_rot.is_finite()) {
            return Err(AugmentError::InvalidBounds(format!(
                "max_trans={max_trans}, max_rot={max_rot}"
            )));
        }
        Ok(Self { max_trans, max_rot })
    }

    pub fn is_zero(&self) -> bool {
        self.max_trans == 0.0 && self.max_rot == 0.0
    }

    fn contains(&self, d: &Pose) -> bool {
        const SLACK: f64 = 1e-12;
        d.position().norm() <= self.max_trans + SLACK
            && d.rotation().angle() <= self.max_rot + SLACK
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpSpec {
    pub keypoints: Vec<usize>,
    pub deltas: Vec<Pose>,
    pub seed: u64,
    pub bounds: WarpBounds,
}

impl WarpSpec {
    fn check(&self, frames: usize) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::SpecMismatch(m));
        if self.keypoints.len() < 2 {
            return bad("fewer than two keypoints".into());
        }
        if self.keypoints.len() != self.deltas.len() {
            return bad(format!(
                "{} keypoints but {} deltas",
                self.keypoints.len(),
                self.deltas.len()
            ));
        }
        if self.keypoints[0] != 0 || *self.keypoints.last().unwrap() + 1 != frames {
            return bad(format!("keypoints must span frames 0..={}", frames.saturating_sub(1)));
        }
        if self.keypoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("keypoints not strictly increasing".into());
        }
        if let Some(i) = self.deltas.iter().position(|d| !self.bounds.contains(d)) {
            return bad(format!("delta {i} exceeds bounds"));
        }
        Ok(())
    }
}

/// Evenly spaced keypoints including both endpoints.
pub fn keypoint_indices(frames: usize, n_keypoints: usize) -> Vec<usize> {
    let span = (frames - 1) as f64 / (n_keypoints - 1) as f64;
    (0..n_keypoints)
        .map(|i| (i as f64 * span).round() as usize)
        .collect()
}

fn unit_ball(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

fn sample_delta(rng: &mut ChaCha8Rng, bounds: &WarpBounds) -> Pose {
    let p = if bounds.max_trans > 0.0 {
        unit_ball(rng) * bounds.max_trans
    } else {
        Vector3::zeros()
    };
    let axis = loop {
        let a = unit_ball(rng);
        if a.norm() > 1e-6 {
            break a;
        }
    };
    let angle = rng.gen::<f64>() * bounds.max_rot;
    if p == Vector3::zeros() && angle == 0.0 {
        return Pose::identity();
    }
    Pose::from_axis_angle(axis, angle).with_position(p)
}

pub fn sample_warp(
    ep: &Episode,
    n_keypoints: usize,
    bounds: WarpBounds,
    seed: u64,
) -> Result<WarpSpec, AugmentError> {
    if n_keypoints < 2 || ep.len() < n_keypoints {
        return Err(AugmentError::EpisodeTooShort {
            frames: ep.len(),
            keypoints: n_keypoints,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keypoints = keypoint_indices(ep.len(), n_keypoints);
    let deltas = keypoints.iter().map(|_| sample_delta(&mut rng, &bounds)).collect();
    Ok(WarpSpec {
        keypoints,
        deltas,
        seed,
        bounds,
    })
}

fn apply(delta: &Pose, m: &mut BTreeMap<String, Pose>) {
    if delta.is_identity() {
        return;
    }
    for p in m.values_mut() {
        *p = delta.compose(p);
    }
}

/// Pre-compose every mocap and action pose with the interpolated delta.
/// Timestamps, joints and attachments are left as recorded.
pub fn warp_trajectory(ep: &Episode, spec: &WarpSpec) -> Result<Episode, AugmentError> {
    spec.check(ep.len())?;
    let mut out = ep.clone();
    for (seg, w) in spec.keypoints.windows(2).enumerate() {
        let (ka, kb) = (w[0], w[1]);
        let (da, db) = (&spec.deltas[seg], &spec.deltas[seg + 1]);
        // The closing keypoint belongs to the next segment, except the last.
        let end = if seg + 2 == spec.keypoints.len() { kb } else { kb - 1 };
        for i in ka..=end {
            let d = if i == ka {
                *da
            } else if i == kb {
                *db
            } else {
                lerp_pose(da, db, (i - ka) as f64 / (kb - ka) as f64)
            };
            let f = &mut out.frames[i];
            apply(&d, &mut f.mocap);
            apply(&d, &mut f.action);
        }
    }
    Ok(out)
}

/// Keypoints used per episode by [`multiply`].
pub const DEFAULT_KEYPOINTS: usize = 4;

/// Originals followed by `k − 1` warps of each, in input order. Each warp
/// uses its own seed derived from `(seed, episode, copy)`, so the output
/// does not depend on evaluation order.
pub fn multiply(
    eps: &[Episode],
    k: usize,
    bounds: WarpBounds,
    seed: u64,
) -> Result<Vec<Episode>, AugmentError> {
    let mut out = Vec::with_capacity(eps.len() * k);
    for (e, ep) in eps.iter().enumerate() {
        out.push(ep.clone());
        let n = DEFAULT_KEYPOINTS.min(ep.len()).max(2);
        for c in 1..k {
            let spec = sample_warp(ep, n, bounds, derive_seed(seed, e, c))?;
            out.push(warp_trajectory(ep, &spec)?);
        }
    }
    Ok(out)
}

pub fn derive_seed(seed: u64, episode: usize, copy: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((episode as u64) << 32) | copy as u64);
    rng.next_u64()
}
