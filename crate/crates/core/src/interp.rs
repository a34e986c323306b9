//! Receiver-side frame scheduling and the reference interpolation backend.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Fraction, Frame, KeyPointSet, MAX_INTERP_FRAMES};
use crate::warp::{ReferenceWarp, WarpBackend};

/// How a display frame is produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FrameTag {
    /// Frame 0: the pivot itself.
    PivotDirect,
    /// Warped from the pivot using this frame's own transmitted keypoints.
    Keyed(u32),
    /// Synthesized between two anchor frames.
    Interpolated { left: u32, right: u32, fraction: Fraction },
    /// Repeats an earlier displayed frame when no right anchor ever arrived.
    Hold(u32),
}

impl FrameTag {
    pub fn is_anchor(&self) -> bool {
        matches!(self, FrameTag::PivotDirect | FrameTag::Keyed(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub tags: Vec<FrameTag>,
}

pub fn build_schedule(n_frames: usize, interp_frames: u8) -> Result<Schedule> {
    if interp_frames > MAX_INTERP_FRAMES {
        return Err(Error::Config(vec!["interp_frames out of range".into()]));
    }
    if n_frames == 0 {
        return Err(Error::ZeroFrames);
    }
    let step = interp_frames as usize + 1;
    let mut tags = Vec::with_capacity(n_frames);
    tags.push(FrameTag::PivotDirect);
    let mut left = 1;
    while left < n_frames {
        tags.push(FrameTag::Keyed(left as u32));
        let right = left + step;
        if right < n_frames {
            for j in 1..step {
                tags.push(FrameTag::Interpolated {
                    left: left as u32,
                    right: right as u32,
                    fraction: Fraction { num: j as u32, den: step as u32 },
                });
            }
            left = right;
        } else {
            // No right neighbour: the tail is transmitted rather than extrapolated.
            for i in left + 1..n_frames {
                tags.push(FrameTag::Keyed(i as u32));
            }
            break;
        }
    }
    Ok(Schedule { tags })
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn keyed_indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.tags.iter().filter_map(|t| match t {
            FrameTag::Keyed(i) => Some(*i),
            _ => None,
        })
    }

    pub fn interpolated_count(&self) -> usize {
        self.tags.iter().filter(|t| matches!(t, FrameTag::Interpolated { .. })).count()
    }

    /// Checks coverage and anchoring: every frame is tagged once, keyed tags
    /// name their own index, interpolated frames sit strictly between two
    /// anchors at the matching fraction, and holds point backwards.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Malformed(m));
        if self.tags.first() != Some(&FrameTag::PivotDirect) {
            return bad("schedule must start with the pivot".into());
        }
        for (i, tag) in self.tags.iter().enumerate() {
            let i = i as u32;
            match *tag {
                FrameTag::PivotDirect if i != 0 => return bad(format!("pivot tag at {i}")),
                FrameTag::Keyed(k) if k != i => return bad(format!("keyed tag {k} at {i}")),
                FrameTag::Interpolated { left, right, fraction } => {
                    if !(left < i && i < right) || right as usize >= self.tags.len() {
                        return bad(format!("frame {i} not between {left} and {right}"));
                    }
                    if !self.tags[left as usize].is_anchor() || !self.tags[right as usize].is_anchor() {
                        return bad(format!("frame {i} interpolates between non-anchors"));
                    }
                    if fraction.num as u64 * (right - left) as u64 != (i - left) as u64 * fraction.den as u64 {
                        return bad(format!("frame {i} fraction {fraction:?} off its span"));
                    }
                }
                FrameTag::Hold(src) if src >= i => return bad(format!("frame {i} holds {src}")),
                _ => {}
            }
        }
        Ok(())
    }
}

/// A pivot frame together with the keypoints detected on it.
#[derive(Clone, Copy, Debug)]
pub struct PivotRef<'a> {
    pub frame: &'a Frame,
    pub keypoints: &'a KeyPointSet,
}

/// Synthesizes a frame between two reconstructed anchors.
pub trait InterpBackend: Send + Sync {
    #[allow(clippy::too_many_arguments)]
    fn interpolate(
        &self,
        left: &Frame,
        right: &Frame,
        left_kps: &KeyPointSet,
        right_kps: &KeyPointSet,
        fraction: Fraction,
        pivot: PivotRef<'_>,
        frame_index: u32,
    ) -> Result<Frame>;
}

/// Blends keypoints linearly and warps the pivot to the blended set. Exact
/// whenever the true keypoint motion between the anchors is linear.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceInterp {
    pub warp: ReferenceWarp,
}

pub fn reference_interpolate(
    left_kps: &KeyPointSet,
    right_kps: &KeyPointSet,
    fraction: Fraction,
    pivot: PivotRef<'_>,
    warp: &dyn WarpBackend,
    frame_index: u32,
) -> Result<Frame> {
    if !fraction.is_interior() {
        return Err(Error::InvalidArgument(format!("fraction {fraction:?} outside (0, 1)")));
    }
    let mid = KeyPointSet::lerp(left_kps, right_kps, fraction, frame_index)?;
    warp.reconstruct(pivot.frame, pivot.keypoints, &mid)
}

impl InterpBackend for ReferenceInterp {
    fn interpolate(
        &self,
        _left: &Frame,
        _right: &Frame,
        left_kps: &KeyPointSet,
        right_kps: &KeyPointSet,
        fraction: Fraction,
        pivot: PivotRef<'_>,
        frame_index: u32,
    ) -> Result<Frame> {
        reference_interpolate(left_kps, right_kps, fraction, pivot, &self.warp, frame_index)
    }
}
