//! Shared domain types: frames, keypoint sets, stream configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FRAME_DIM: usize = 16;
pub const DEFAULT_NUM_KEYPOINTS: usize = 10;
pub const MAX_INTERP_FRAMES: u8 = 3;

/// A decoded 8-bit RGB image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    index: u32,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, index: u32) -> Result<Self> {
        if width < MIN_FRAME_DIM || height < MIN_FRAME_DIM {
            return Err(Error::InvalidFrame(format!(
                "{width}x{height} is below the {MIN_FRAME_DIM}x{MIN_FRAME_DIM} minimum"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidFrame(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels, index })
    }

    /// A frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3], index: u32) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels, index)
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        index: u32,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels, index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn with_index(mut self, index: u32) -> Self {
        self.index = index;
        self
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// BT.601 luma of every pixel as floats in [0, 255].
    pub fn luma(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }
}

/// A 2-D point in normalized image coordinates: origin at the image centre,
/// +x right, +y down, the visible image spanning [-1, 1] on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPoint {
    pub x: f32,
    pub y: f32,
}

impl KeyPoint {
    pub fn new(x: f32, y: f32) -> Self {
        Self { x, y }
    }

    pub fn in_range(&self) -> bool {
        (-1.0..=1.0).contains(&self.x) && (-1.0..=1.0).contains(&self.y)
    }

    pub fn clamped(&self) -> Self {
        Self { x: self.x.clamp(-1.0, 1.0), y: self.y.clamp(-1.0, 1.0) }
    }
}

/// Normalized coordinate of the centre of pixel `px` along an axis of `extent` pixels.
#[inline]
pub fn to_normalized(px: f64, extent: usize) -> f64 {
    (px + 0.5) * 2.0 / extent as f64 - 1.0
}

/// Inverse of [`to_normalized`].
#[inline]
pub fn to_pixels(n: f64, extent: usize) -> f64 {
    (n + 1.0) * extent as f64 / 2.0 - 0.5
}

/// The per-frame keypoint payload: N normalized points, no Jacobians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPointSet {
    pub frame_index: u32,
    points: Vec<KeyPoint>,
}

impl KeyPointSet {
    /// Validates that every coordinate lies in [-1, 1] and the set is non-empty.
    pub fn new(frame_index: u32, points: Vec<KeyPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidKeypoints("empty keypoint set".into()));
        }
        if points.len() > u8::MAX as usize {
            return Err(Error::InvalidKeypoints(format!("{} keypoints exceed 255", points.len())));
        }
        for p in &points {
            if !p.in_range() {
                let bad = if (-1.0..=1.0).contains(&p.x) { p.y } else { p.x };
                return Err(Error::CoordinateOutOfRange(bad));
            }
        }
        Ok(Self { frame_index, points })
    }

    /// Clamps stray coordinates (e.g. a face partly leaving the frame) into range.
    pub fn clamped(frame_index: u32, points: impl IntoIterator<Item = KeyPoint>) -> Result<Self> {
        let points = points
            .into_iter()
            .map(|p| {
                if p.x.is_nan() || p.y.is_nan() {
                    Err(Error::InvalidKeypoints("NaN coordinate".into()))
                } else {
                    Ok(p.clamped())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(frame_index, points)
    }

    pub fn points(&self) -> &[KeyPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_index(mut self, frame_index: u32) -> Self {
        self.frame_index = frame_index;
        self
    }

    /// Componentwise `(1 - t) * a + t * b` for a rational `t = num / den`.
    ///
    /// Evaluated as `((den - num) * a + num * b) / den` in f64 and rounded
    /// once to f32, so the result is exact whenever the true blend is
    /// representable (e.g. linear motion sampled on a dyadic grid).
    pub fn lerp(a: &KeyPointSet, b: &KeyPointSet, t: Fraction, frame_index: u32) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::KeypointCountMismatch { left: a.len(), right: b.len() });
        }
        let (num, den) = (t.num as f64, t.den as f64);
        let mix = |u: f32, v: f32| (((den - num) * u as f64 + num * v as f64) / den) as f32;
        let points: Vec<KeyPoint> = a
            .points
            .iter()
            .zip(&b.points)
            .map(|(p, q)| KeyPoint::new(mix(p.x, q.x), mix(p.y, q.y)))
            .collect();
        Self::clamped(frame_index, points)
    }
}

/// A rational blend weight `num / den` with `0 <= num <= den`, `den > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u32,
    pub den: u32,
}

impl Fraction {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::InvalidArgument(format!("fraction {num}/{den}")));
        }
        Ok(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Strictly inside (0, 1).
    pub fn is_interior(&self) -> bool {
        self.num > 0 && self.num < self.den
    }
}

/// Head pose in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseAngles {
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
}

impl PoseAngles {
    pub fn new(yaw: f64, roll: f64, pitch: f64) -> Result<Self> {
        for (name, v) in [("yaw", yaw), ("roll", roll), ("pitch", pitch)] {
            if !v.is_finite() || !(-90.0..=90.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [-90, 90]")));
            }
        }
        Ok(Self { yaw, roll, pitch })
    }
}

/// Replacement thresholds for the adaptive pivot policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotThresholds {
    pub gamma_yaw: f64,
    pub gamma_roll: f64,
    pub gamma_pitch: f64,
    pub d_bg: f64,
}

impl Default for PivotThresholds {
    fn default() -> Self {
        Self { gamma_yaw: 15.0, gamma_roll: 15.0, gamma_pitch: 15.0, d_bg: 0.05 }
    }
}

impl PivotThresholds {
    /// Same angular threshold on all three axes.
    pub fn uniform(gamma: f64, d_bg: f64) -> Self {
        Self { gamma_yaw: gamma, gamma_roll: gamma, gamma_pitch: gamma, d_bg }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub width: u32,
    pub height: u32,
    pub num_keypoints: u8,
    /// Receiver-interpolated frames between consecutive keyed frames.
    pub interp_frames: u8,
    pub sr_factor: u8,
    pub sr_patch: u16,
    pub fps: u16,
    pub pivot_policy: PivotThresholds,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            num_keypoints: DEFAULT_NUM_KEYPOINTS as u8,
            interp_frames: 1,
            sr_factor: 2,
            sr_patch: 64,
            fps: 25,
            pivot_policy: PivotThresholds::default(),
        }
    }
}

impl StreamConfig {
    pub fn output_dims(&self) -> (usize, usize) {
        (
            self.width as usize * self.sr_factor as usize,
            self.height as usize * self.sr_factor as usize,
        )
    }

    /// Every violated invariant, empty when the configuration is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if (self.width as usize) < MIN_FRAME_DIM {
            errs.push("width below minimum".to_string());
        }
        if (self.height as usize) < MIN_FRAME_DIM {
            errs.push("height below minimum".to_string());
        }
        if self.num_keypoints == 0 {
            errs.push("num_keypoints must be at least 1".to_string());
        }
        if self.interp_frames > MAX_INTERP_FRAMES {
            errs.push("interp_frames out of range".to_string());
        }
        if !matches!(self.sr_factor, 1 | 2) {
            errs.push("sr_factor must be 1 or 2".to_string());
        }
        if self.sr_patch < 8 {
            errs.push("sr_patch below minimum of 8".to_string());
        }
        if self.fps == 0 {
            errs.push("fps must be positive".to_string());
        }
        let th = &self.pivot_policy;
        for (name, v) in [
            ("gamma_yaw", th.gamma_yaw),
            ("gamma_roll", th.gamma_roll),
            ("gamma_pitch", th.gamma_pitch),
            ("d_bg", th.d_bg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name} must be strictly positive"));
            }
        }
        errs
    }
}

pub fn validate_config(cfg: &StreamConfig) -> Result<()> {
    let errs = cfg.violations();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = StreamConfig::default();
        assert!(validate_config(&cfg).is_ok());
        assert_eq!(cfg.sr_patch, 64);
        assert_eq!(cfg.output_dims(), (512, 512));
    }

    #[test]
    fn interp_frames_above_three_rejected() {
        let cfg = StreamConfig { interp_frames: 4, ..Default::default() };
        assert_eq!(cfg.violations(), vec!["interp_frames out of range"]);
    }

    #[test]
    fn narrow_width_rejected() {
        let cfg = StreamConfig { width: 8, ..Default::default() };
        assert_eq!(cfg.violations(), vec!["width below minimum"]);
    }

    #[test]
    fn all_violations_reported() {
        let cfg = StreamConfig {
            width: 8,
            interp_frames: 9,
            pivot_policy: PivotThresholds { d_bg: 0.0, ..Default::default() },
            ..Default::default()
        };
        assert_eq!(cfg.violations().len(), 3);
    }

    #[test]
    fn frame_invariants() {
        assert!(Frame::new(2, 2, vec![0; 12], 0).is_err());
        assert!(Frame::new(16, 16, vec![0; 10], 0).is_err());
        assert!(Frame::filled(16, 16, [1, 2, 3], 0).is_ok());
    }

    #[test]
    fn keypoint_range_and_clamp() {
        assert!(matches!(
            KeyPointSet::new(0, vec![KeyPoint::new(1.5, 0.0)]),
            Err(Error::CoordinateOutOfRange(v)) if v == 1.5
        ));
        let k = KeyPointSet::clamped(0, [KeyPoint::new(1.5, -3.0)]).unwrap();
        assert_eq!(k.points()[0], KeyPoint::new(1.0, -1.0));
        assert!(KeyPointSet::new(0, vec![]).is_err());
    }

    #[test]
    fn lerp_midpoint() {
        let a = KeyPointSet::new(1, vec![KeyPoint::new(0.0, 0.0)]).unwrap();
        let b = KeyPointSet::new(3, vec![KeyPoint::new(0.2, 0.4)]).unwrap();
        let m = KeyPointSet::lerp(&a, &b, Fraction::new(1, 2).unwrap(), 2).unwrap();
        assert_eq!(m.points()[0], KeyPoint::new(0.1, 0.2));
    }

    #[test]
    fn lerp_thirds_exact_on_dyadic_grid() {
        // Linear motion of 3/1024 per frame sampled at t = 0 and t = 3.
        let v = 3.0f32 / 1024.0;
        let a = KeyPointSet::new(0, vec![KeyPoint::new(-v, 0.5)]).unwrap();
        let b = KeyPointSet::new(3, vec![KeyPoint::new(2.0 * v, 0.5 - 3.0 * v)]).unwrap();
        let m = KeyPointSet::lerp(&a, &b, Fraction::new(1, 3).unwrap(), 1).unwrap();
        assert_eq!(m.points()[0], KeyPoint::new(0.0, 0.5 - v));
    }

    proptest! {
        #[test]
        fn pixel_normalized_roundtrip(px in 0.0f64..1024.0, extent in 16usize..2048) {
            let back = to_pixels(to_normalized(px, extent), extent);
            prop_assert!((back - px).abs() < 0.5);
        }
    }
}
