//! Deterministic synthetic talking-head scenes with ground-truth keypoints,
//! head pose and face masks. Used by tests, examples and the `synth`
//! subcommand in place of a learned detector and real video.

use serde::{Deserialize, Serialize};

use crate::model::{Frame, KeyPoint, KeyPointSet, PoseAngles};
use crate::pivot::FaceMask;

/// Keypoints sit on a 1/64 grid and per-frame velocities on a 1/2048 grid,
/// so linear trajectories stay exactly representable in f32.
const BASE_POINTS: [(f32, f32); 10] = [
    (-0.28125, -0.25),    // left brow
    (0.28125, -0.25),     // right brow
    (-0.203125, -0.125),  // left eye
    (0.203125, -0.125),   // right eye
    (0.0, 0.046875),      // nose
    (-0.171875, 0.265625),// mouth left
    (0.171875, 0.265625), // mouth right
    (0.0, 0.3125),        // mouth centre
    (-0.421875, 0.0625),  // left cheek
    (0.421875, 0.0625),   // right cheek
];

pub fn base_keypoints() -> KeyPointSet {
    KeyPointSet::new(0, BASE_POINTS.iter().map(|&(x, y)| KeyPoint::new(x, y)).collect())
        .expect("base keypoints are in range")
}

pub fn shifted(kps: &KeyPointSet, dx: f32, dy: f32, frame_index: u32) -> KeyPointSet {
    KeyPointSet::clamped(frame_index, kps.points().iter().map(|p| KeyPoint::new(p.x + dx, p.y + dy)))
        .expect("finite shift")
}

fn gauss(dx: f64, dy: f64, s: f64) -> f64 {
    (-(dx * dx + dy * dy) / (2.0 * s * s)).exp()
}

/// A smooth head-and-shoulders scene. `bg_phase` pans the background
/// pattern without touching the face.
pub fn scene_frame(width: usize, height: usize, index: u32, bg_phase: f64) -> Frame {
    Frame::from_fn(width, height, index, |x, y| {
        let u = (x as f64 + 0.5) / width as f64 * 2.0 - 1.0;
        let v = (y as f64 + 0.5) / height as f64 * 2.0 - 1.0;
        let stripes = (u * 2.5 + bg_phase).sin() * (v * 1.5 + 0.3).cos();
        let mut rgb = [
            90.0 + 40.0 * stripes + 20.0 * v,
            110.0 + 35.0 * stripes - 15.0 * u,
            140.0 + 30.0 * stripes + 10.0 * u * v,
        ];
        // Face: a soft ellipse with brows, eyes, nose and mouth.
        let face = (-(((u / 0.55).powi(2) + (v / 0.7).powi(2)).powi(2)) * 1.2).exp();
        let skin = [215.0, 170.0, 140.0];
        let mut feat = 0.0;
        for &(px, py) in &BASE_POINTS[..4] {
            feat += 0.8 * gauss(u - px as f64, v - py as f64, 0.05);
        }
        feat += 0.35 * gauss(u, v - 0.05, 0.06);
        feat += 0.9 * gauss((u) / 2.2, v - 0.28, 0.05);
        for ch in 0..3 {
            let face_c = skin[ch] * (1.0 - 0.7 * feat.min(1.0));
            rgb[ch] = rgb[ch] * (1.0 - face) + face_c * face;
        }
        rgb.map(|c| c.round().clamp(0.0, 255.0) as u8)
    })
    .expect("scene dimensions are validated by the caller")
}

pub fn base_frame(width: usize, height: usize, index: u32) -> Frame {
    scene_frame(width, height, index, 0.0)
}

/// Elliptical face region matching [`scene_frame`].
pub fn face_mask(width: usize, height: usize) -> FaceMask {
    let mut face = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64 * 2.0 - 1.0;
            let v = (y as f64 + 0.5) / height as f64 * 2.0 - 1.0;
            face.push((u / 0.6).powi(2) + (v / 0.78).powi(2) <= 1.0);
        }
    }
    FaceMask::new(width, height, face).expect("sizes agree")
}

/// Per-keypoint velocity in units of 1/2048 normalized per frame.
const VELOCITY: [(i32, i32); 10] = [
    (2, -1), (1, -1), (2, 0), (1, 0), (1, 1), (2, 2), (0, 2), (1, 3), (2, -1), (0, 1),
];

/// Every keypoint moves at its own constant velocity: `p(t) = p(0) + t * v`.
/// Values stay on a dyadic grid, so any rational blend of two samples that
/// lands on a frame is reproduced exactly by [`KeyPointSet::lerp`].
pub fn linear_trajectories(n_frames: usize) -> Vec<KeyPointSet> {
    let unit = 1.0 / 2048.0;
    (0..n_frames)
        .map(|t| {
            let pts = BASE_POINTS.iter().zip(VELOCITY).map(|(&(x, y), (vx, vy))| {
                KeyPoint::new(
                    (x as f64 + t as f64 * vx as f64 * unit) as f32,
                    (y as f64 + t as f64 * vy as f64 * unit) as f32,
                )
            });
            KeyPointSet::clamped(t as u32, pts).expect("finite")
        })
        .collect()
}

/// Head sway plus mouth opening: smooth but not linear between samples.
pub fn nonlinear_trajectories(n_frames: usize) -> Vec<KeyPointSet> {
    (0..n_frames)
        .map(|t| {
            let tt = t as f64;
            let sway_x = 0.04 * (tt * 0.21).sin();
            let sway_y = 0.025 * (tt * 0.13).sin();
            let mouth = 0.03 * (tt * 0.37).sin().max(0.0);
            let pts = BASE_POINTS.iter().enumerate().map(|(k, &(x, y))| {
                let open = if (5..8).contains(&k) { mouth } else { 0.0 };
                let dx = if t == 0 { 0.0 } else { sway_x };
                let dy = if t == 0 { 0.0 } else { sway_y + open };
                KeyPoint::new((x as f64 + dx) as f32, (y as f64 + dy) as f32)
            });
            KeyPointSet::clamped(t as u32, pts).expect("finite")
        })
        .collect()
}

/// A scripted long-call trace: the head turns steadily (yaw, pitch) while the
/// camera slowly pans across the background. Every signal moves away from
/// any earlier frame monotonically, so replacement counts fall as the
/// thresholds rise.
#[derive(Clone, Debug)]
pub struct PolicyTrace {
    pub frames: Vec<Frame>,
    pub keypoints: Vec<KeyPointSet>,
    pub poses: Vec<PoseAngles>,
    pub masks: Vec<FaceMask>,
}

pub fn policy_trace(n_frames: usize, width: usize, height: usize) -> PolicyTrace {
    let span = n_frames.max(2) as f64 - 1.0;
    let mask = face_mask(width, height);
    let mut trace = PolicyTrace { frames: vec![], keypoints: vec![], poses: vec![], masks: vec![] };
    for t in 0..n_frames {
        let s = t as f64 / span;
        trace.frames.push(scene_frame(width, height, t as u32, 2.4 * s));
        trace.keypoints.push(base_keypoints().with_index(t as u32));
        trace
            .poses
            .push(PoseAngles::new(70.0 * s, 4.0 * s, 25.0 * s).expect("in range"));
        trace.masks.push(mask.clone());
    }
    trace
}

/// Which synthetic motion a generated clip follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipKind {
    /// Constant keypoint velocities; every reconstruction is exact.
    Linear,
    /// Sway and mouth motion.
    Nonlinear,
    /// Still keypoints, turning head, panning background.
    Policy,
}

impl std::str::FromStr for ClipKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "nonlinear" => Ok(Self::Nonlinear),
            "policy" => Ok(Self::Policy),
            _ => Err(crate::error::Error::InvalidArgument(format!(
                "unknown clip kind {s:?} (linear, nonlinear, policy)"
            ))),
        }
    }
}

/// A generated clip in the same shape as the on-disk sidecars.
pub fn clip(kind: ClipKind, n_frames: usize, width: usize, height: usize) -> crate::error::Result<PolicyTrace> {
    if n_frames == 0 {
        return Err(crate::error::Error::EmptySequence);
    }
    let trajectories = match kind {
        ClipKind::Policy => return Ok(policy_trace(n_frames, width, height)),
        ClipKind::Linear => linear_trajectories(n_frames),
        ClipKind::Nonlinear => nonlinear_trajectories(n_frames),
    };
    let frames = crate::warp::synthesize_sequence(
        &base_frame(width, height, 0),
        &trajectories,
        crate::warp::DEFAULT_SIGMA,
    )?;
    Ok(PolicyTrace {
        frames,
        keypoints: trajectories,
        poses: vec![PoseAngles::default(); n_frames],
        masks: vec![face_mask(width, height); n_frames],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_trajectories_are_exact_lines() {
        let tr = linear_trajectories(50);
        for t in 1..49 {
            for k in 0..10 {
                let (a, b, c) = (tr[t - 1].points()[k], tr[t].points()[k], tr[t + 1].points()[k]);
                assert_eq!(b.x - a.x, c.x - b.x);
                assert_eq!(b.y - a.y, c.y - b.y);
            }
        }
    }

    #[test]
    fn nonlinear_starts_at_base() {
        assert_eq!(nonlinear_trajectories(3)[0].points(), base_keypoints().points());
    }

    #[test]
    fn mask_covers_face_only() {
        let m = face_mask(64, 64);
        assert!(m.is_face(32, 32));
        assert!(!m.is_face(0, 0));
    }
}
