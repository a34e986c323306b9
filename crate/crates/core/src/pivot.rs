//! Sender-side adaptive pivot selection.
//!
//! The pivot is replaced when the head pose drifts past an angular threshold
//! on any axis, or the background embedding moves past a distance threshold.

use serde::{Deserialize, Serialize};

use crate::bitstream::{encode_pivot, Packet, RateLedger};
use crate::error::{Error, Result};
use crate::model::{Frame, KeyPointSet, PivotThresholds, PoseAngles};

pub const EMBEDDING_GRID: usize = 16;
pub const EMBEDDING_LEN: usize = EMBEDDING_GRID * EMBEDDING_GRID;

/// Per-pixel face segmentation; `true` marks face pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaceMask {
    width: usize,
    height: usize,
    face: Vec<bool>,
}

impl FaceMask {
    pub fn new(width: usize, height: usize, face: Vec<bool>) -> Result<Self> {
        if face.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "mask of {} entries for {width}x{height}",
                face.len()
            )));
        }
        Ok(Self { width, height, face })
    }

    /// Fallback when no segmentation is available: the outer 20% ring of the
    /// frame counts as background, the interior as face.
    pub fn border_band(width: usize, height: usize) -> Self {
        let (bx, by) = (width / 5, height / 5);
        let face = (0..height)
            .flat_map(|y| {
                (0..width).map(move |x| x >= bx && x < width - bx && y >= by && y < height - by)
            })
            .collect();
        Self { width, height, face }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_face(&self, x: usize, y: usize) -> bool {
        self.face[y * self.width + x]
    }
}

/// Unit-length 16×16 pooled grayscale background descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEmbedding {
    pub vector: Vec<f64>,
}

impl BackgroundEmbedding {
    pub fn distance(&self, other: &BackgroundEmbedding) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn background_embedding(frame: &Frame, mask: &FaceMask) -> Result<BackgroundEmbedding> {
    let (w, h) = frame.dims();
    if mask.dims() != (w, h) {
        return Err(Error::DimensionMismatch(mask.dims(), (w, h)));
    }
    let luma = frame.luma();
    let mut sums = [0.0f64; EMBEDDING_LEN];
    let mut counts = [0usize; EMBEDDING_LEN];
    for y in 0..h {
        let cy = y * EMBEDDING_GRID / h;
        for x in 0..w {
            if mask.is_face(x, y) {
                continue;
            }
            let c = cy * EMBEDDING_GRID + x * EMBEDDING_GRID / w;
            sums[c] += luma[y * w + x];
            counts[c] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoBackground);
    }
    let mean = sums.iter().sum::<f64>() / total as f64;
    let mut vector: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { mean } else { s / n as f64 })
        .collect();
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Pure black background has no direction; treat it as uniform.
        vector.fill(1.0 / EMBEDDING_GRID as f64);
    } else {
        vector.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(BackgroundEmbedding { vector })
}

#[derive(Clone, Debug)]
pub struct PivotState {
    pub pivot_frame: Frame,
    pub pivot_pose: PoseAngles,
    pub pivot_bg: BackgroundEmbedding,
    pub established_at: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Keep,
    Replace,
    /// A threshold was breached inside the cooldown window.
    Deferred,
}

/// Replace iff any pose delta or the background distance exceeds its threshold.
pub fn should_replace(
    state: &PivotState,
    pose: &PoseAngles,
    bg: &BackgroundEmbedding,
    th: &PivotThresholds,
) -> Decision {
    let p = &state.pivot_pose;
    let breach = (pose.yaw - p.yaw).abs() > th.gamma_yaw
        || (pose.roll - p.roll).abs() > th.gamma_roll
        || (pose.pitch - p.pitch).abs() > th.gamma_pitch
        || state.pivot_bg.distance(bg) > th.d_bg;
    if breach {
        Decision::Replace
    } else {
        Decision::Keep
    }
}

/// Makes `new_frame` the pivot. Returns the new state together with the
/// pivot packet; `ledger` is credited only once encoding has succeeded.
pub fn apply_replacement(
    new_frame: &Frame,
    new_keypoints: &KeyPointSet,
    new_pose: PoseAngles,
    new_bg: BackgroundEmbedding,
    ledger: &mut RateLedger,
) -> Result<(PivotState, Packet)> {
    let packet = encode_pivot(new_frame, new_keypoints)?;
    ledger.record(&packet);
    let state = PivotState {
        pivot_frame: new_frame.clone(),
        pivot_pose: new_pose,
        pivot_bg: new_bg,
        established_at: new_frame.index(),
    };
    Ok((state, packet))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotPolicy {
    pub thresholds: PivotThresholds,
    /// Minimum frames between pivot establishments; `None` disables it.
    pub cooldown: Option<u32>,
}

impl PivotPolicy {
    pub fn new(thresholds: PivotThresholds) -> Self {
        Self { thresholds, cooldown: None }
    }

    pub fn decide(
        &self,
        state: &PivotState,
        frame_index: u32,
        pose: &PoseAngles,
        bg: &BackgroundEmbedding,
    ) -> Decision {
        match should_replace(state, pose, bg, &self.thresholds) {
            Decision::Replace => match self.cooldown {
                Some(c) if frame_index.saturating_sub(state.established_at) < c => Decision::Deferred,
                _ => Decision::Replace,
            },
            d => d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn uniform_bg() -> BackgroundEmbedding {
        BackgroundEmbedding { vector: vec![1.0 / 16.0; EMBEDDING_LEN] }
    }

    fn state_at(pose: PoseAngles) -> PivotState {
        PivotState {
            pivot_frame: Frame::filled(16, 16, [0, 0, 0], 0).unwrap(),
            pivot_pose: pose,
            pivot_bg: uniform_bg(),
            established_at: 0,
        }
    }

    /// Unit vector at a chosen distance from the uniform embedding.
    fn bg_at_distance(d: f64) -> BackgroundEmbedding {
        // Rotate the uniform vector toward an orthogonal unit direction by
        // angle theta; chord length is 2 sin(theta / 2).
        let theta = 2.0 * (d / 2.0).asin();
        let u = 1.0 / 16.0;
        let ortho: Vec<f64> = (0..EMBEDDING_LEN).map(|i| if i % 2 == 0 { u } else { -u }).collect();
        BackgroundEmbedding {
            vector: ortho.iter().map(|o| theta.cos() * u + theta.sin() * o).collect(),
        }
    }

    #[test]
    fn synthetic_bg_distance_helper() {
        assert!((uniform_bg().distance(&bg_at_distance(0.06)) - 0.06).abs() < 1e-12);
    }

    #[test]
    fn small_deltas_keep() {
        let s = state_at(PoseAngles::default());
        let pose = PoseAngles::new(10.0, 10.0, 10.0).unwrap();
        let d = should_replace(&s, &pose, &bg_at_distance(0.01), &PivotThresholds::default());
        assert_eq!(d, Decision::Keep);
    }

    #[test]
    fn yaw_breach_replaces() {
        let s = state_at(PoseAngles::default());
        let pose = PoseAngles::new(20.0, 0.0, 0.0).unwrap();
        assert_eq!(should_replace(&s, &pose, &uniform_bg(), &PivotThresholds::default()), Decision::Replace);
        // Absolute deltas: turning the other way counts as well.
        let pose = PoseAngles::new(-20.0, 0.0, 0.0).unwrap();
        assert_eq!(should_replace(&s, &pose, &uniform_bg(), &PivotThresholds::default()), Decision::Replace);
    }

    #[test]
    fn background_breach_replaces() {
        let s = state_at(PoseAngles::default());
        let d = should_replace(&s, &PoseAngles::default(), &bg_at_distance(0.06), &PivotThresholds::default());
        assert_eq!(d, Decision::Replace);
    }

    #[test]
    fn embeddings() {
        let f = synthetic::base_frame(64, 64, 0);
        let m = synthetic::face_mask(64, 64);
        let a = background_embedding(&f, &m).unwrap();
        let norm: f64 = a.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(a.distance(&background_embedding(&f, &m).unwrap()), 0.0);

        let brighter = Frame::new(64, 64, f.pixels().iter().map(|&p| p.saturating_add(10)).collect(), 0).unwrap();
        let b = background_embedding(&brighter, &m).unwrap();
        assert!(a.distance(&b) > 0.0);

        let flat = Frame::filled(32, 32, [77, 77, 77], 0).unwrap();
        let all_bg = FaceMask::new(32, 32, vec![false; 32 * 32]).unwrap();
        let e = background_embedding(&flat, &all_bg).unwrap();
        assert!(e.vector.iter().all(|v| (v - 1.0 / 16.0).abs() < 1e-12));

        let all_face = FaceMask::new(32, 32, vec![true; 32 * 32]).unwrap();
        assert!(matches!(background_embedding(&flat, &all_face), Err(Error::NoBackground)));
        assert!(background_embedding(&flat, &m).is_err());
    }

    #[test]
    fn border_band_leaves_a_ring() {
        let m = FaceMask::border_band(50, 50);
        assert!(!m.is_face(9, 25) && m.is_face(10, 25) && m.is_face(39, 25) && !m.is_face(40, 25));
    }

    #[test]
    fn replacement_updates_state_and_ledger() {
        let f = synthetic::base_frame(32, 32, 300);
        let mut ledger = RateLedger::default();
        let pose = PoseAngles::new(25.0, 0.0, 0.0).unwrap();
        let bg = background_embedding(&f, &FaceMask::border_band(32, 32)).unwrap();
        let kps = synthetic::base_keypoints().with_index(300);
        let (s, pkt) = apply_replacement(&f, &kps, pose, bg.clone(), &mut ledger).unwrap();
        assert_eq!(s.established_at, 300);
        assert_eq!(pkt.frame_index, 300);
        assert_eq!(ledger.pivot_payload_bits, pkt.payload.len() as u64 * 8);
        // Against its own frame the new pivot is kept.
        assert_eq!(should_replace(&s, &pose, &bg, &PivotThresholds::default()), Decision::Keep);
    }

    #[test]
    fn cooldown_defers_second_breach() {
        let mut policy = PivotPolicy::new(PivotThresholds::default());
        // Poses alternate far apart every frame.
        let poses: Vec<PoseAngles> = (0..100)
            .map(|t| PoseAngles::new(if t % 2 == 0 { 0.0 } else { 40.0 }, 0.0, 0.0).unwrap())
            .collect();
        let run = |policy: &PivotPolicy| {
            let mut s = state_at(poses[0]);
            let mut replaced = vec![];
            for (t, p) in poses.iter().enumerate().skip(1) {
                if policy.decide(&s, t as u32, p, &uniform_bg()) == Decision::Replace {
                    s.pivot_pose = *p;
                    s.established_at = t as u32;
                    replaced.push(t);
                }
            }
            replaced
        };
        assert_eq!(run(&policy).len(), 99);
        policy.cooldown = Some(30);
        assert_eq!(run(&policy), vec![31, 62, 93]);
    }
}
