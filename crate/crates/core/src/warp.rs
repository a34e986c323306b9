//! Jacobian-free motion model.
//!
//! Each keypoint pair contributes a pure translation `source - driving`. The
//! dense field blends those translations with Gaussian weights centred on the
//! driving keypoints, normalized to sum to one at every pixel, and the pivot
//! is backward-warped through it with bilinear sampling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{to_normalized, Frame, KeyPoint, KeyPointSet};

pub const DEFAULT_SIGMA: f64 = 0.1;

/// Per-pixel displacement in normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFlow {
    pub width: usize,
    pub height: usize,
    pub vectors: Vec<[f64; 2]>,
}

impl DenseFlow {
    pub fn zero(width: usize, height: usize) -> Self {
        Self { width, height, vectors: vec![[0.0; 2]; width * height] }
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        self.vectors[y * self.width + x]
    }

    pub fn negated(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            vectors: self.vectors.iter().map(|[a, b]| [-a, -b]).collect(),
        }
    }
}

/// Softmax-normalized Gaussian weights of each driving keypoint at the
/// normalized position `z`.
pub fn kernel_weights(driving: &KeyPointSet, sigma: f64, z: [f64; 2]) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let logits: Vec<f64> = driving
        .points()
        .iter()
        .map(|p| {
            let dx = z[0] - p.x as f64;
            let dy = z[1] - p.y as f64;
            -(dx * dx + dy * dy) * inv
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

pub fn dense_flow(
    source: &KeyPointSet,
    driving: &KeyPointSet,
    sigma: f64,
    width: usize,
    height: usize,
) -> Result<DenseFlow> {
    if source.len() != driving.len() {
        return Err(Error::KeypointCountMismatch { left: source.len(), right: driving.len() });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let shifts: Vec<[f64; 2]> = source
        .points()
        .iter()
        .zip(driving.points())
        .map(|(s, d)| [s.x as f64 - d.x as f64, s.y as f64 - d.y as f64])
        .collect();

    // The Gaussian is separable: precompute per-column and per-row factors
    // so each pixel costs a few multiplies instead of one exp per keypoint.
    let n = driving.len();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let factor = |extent: usize, coord: fn(&KeyPoint) -> f32| -> Vec<f64> {
        let mut out = vec![0.0; n * extent];
        for (k, p) in driving.points().iter().enumerate() {
            for i in 0..extent {
                let d = to_normalized(i as f64, extent) - coord(p) as f64;
                out[k * extent + i] = (-d * d * inv).exp();
            }
        }
        out
    };
    let ex = factor(width, |p| p.x);
    let ey = factor(height, |p| p.y);

    let mut vectors = vec![[0.0; 2]; width * height];
    vectors.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let zy = to_normalized(y as f64, height);
        let eyk: Vec<f64> = (0..n).map(|k| ey[k * height + y]).collect();
        for (x, v) in row.iter_mut().enumerate() {
            let (mut sum, mut fx, mut fy) = (0.0, 0.0, 0.0);
            for k in 0..n {
                let wk = ex[k * width + x] * eyk[k];
                sum += wk;
                fx += wk * shifts[k][0];
                fy += wk * shifts[k][1];
            }
            *v = if sum > 1e-200 {
                [fx / sum, fy / sum]
            } else {
                // Every weight underflowed (tiny sigma): normalize in log space.
                let w = kernel_weights(driving, sigma, [to_normalized(x as f64, width), zy]);
                w.iter().zip(&shifts).fold([0.0, 0.0], |acc, (wk, s)| [acc[0] + wk * s[0], acc[1] + wk * s[1]])
            };
        }
    });
    Ok(DenseFlow { width, height, vectors })
}

/// Bilinear sample at a pixel-space position, clamped to the image edge.
#[inline]
fn sample(frame: &Frame, sx: f64, sy: f64) -> [f64; 3] {
    let (w, h) = frame.dims();
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let (a, b, c, d) = (frame.pixel(x0, y0), frame.pixel(x1, y0), frame.pixel(x0, y1), frame.pixel(x1, y1));
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
        let bot = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
        out[ch] = top * (1.0 - fy) + bot * fy;
    }
    out
}

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Backward warp: `out(z) = pivot(z + flow(z))`.
pub fn warp(pivot: &Frame, flow: &DenseFlow) -> Result<Frame> {
    let (w, h) = pivot.dims();
    if (flow.width, flow.height) != (w, h) {
        return Err(Error::FlowSizeMismatch { flow: (flow.width, flow.height), frame: (w, h) });
    }
    // Normalized displacement to pixels: the image spans 2 normalized units.
    let (kx, ky) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut pixels = vec![0u8; w * h * 3];
    pixels.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let [dx, dy] = flow.vectors[y * w + x];
            let s = sample(pivot, x as f64 + dx * kx, y as f64 + dy * ky);
            for ch in 0..3 {
                row[x * 3 + ch] = to_u8(s[ch]);
            }
        }
    });
    Frame::new(w, h, pixels, pivot.index())
}

/// Reconstructs a frame from the pivot and a keypoint pair. Implementations
/// must return the pivot's resolution and reproduce the pivot when
/// `source == driving`.
pub trait WarpBackend: Send + Sync {
    fn reconstruct(&self, pivot: &Frame, source: &KeyPointSet, driving: &KeyPointSet) -> Result<Frame>;
}

#[derive(Clone, Copy, Debug)]
pub struct ReferenceWarp {
    pub sigma: f64,
}

impl Default for ReferenceWarp {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA }
    }
}

impl WarpBackend for ReferenceWarp {
    fn reconstruct(&self, pivot: &Frame, source: &KeyPointSet, driving: &KeyPointSet) -> Result<Frame> {
        let flow = dense_flow(source, driving, self.sigma, pivot.width(), pivot.height())?;
        Ok(warp(pivot, &flow)?.with_index(driving.frame_index))
    }
}

/// Renders a clip whose true motion is exactly the reference model's motion:
/// frame `t` is the base warped from `trajectories[0]` to `trajectories[t]`.
pub fn synthesize_sequence(base: &Frame, trajectories: &[KeyPointSet], sigma: f64) -> Result<Vec<Frame>> {
    let first = trajectories.first().ok_or(Error::EmptySequence)?;
    let backend = ReferenceWarp { sigma };
    trajectories
        .par_iter()
        .enumerate()
        .map(|(t, kps)| Ok(backend.reconstruct(base, first, kps)?.with_index(t as u32)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::model::KeyPoint;
    use proptest::prelude::*;

    fn set(points: &[(f32, f32)]) -> KeyPointSet {
        KeyPointSet::new(0, points.iter().map(|&(x, y)| KeyPoint::new(x, y)).collect()).unwrap()
    }

    fn gradient(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, 0, |x, y| [(x * 4) as u8, (y * 3) as u8, ((x + y) * 2) as u8]).unwrap()
    }

    fn smooth(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, 0, |x, y| {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            let r = 128.0 + 90.0 * (u * 6.0).sin() * (v * 4.0).cos();
            let g = 60.0 + 150.0 * u * v;
            let b = 120.0 + 80.0 * ((u + v) * 5.0).cos();
            [r as u8, g as u8, b as u8]
        })
        .unwrap()
    }

    const TEN: [(f32, f32); 10] = [
        (-0.6, -0.5), (-0.2, -0.55), (0.25, -0.5), (0.6, -0.4), (-0.5, 0.0),
        (0.0, 0.05), (0.45, 0.1), (-0.3, 0.5), (0.1, 0.55), (0.5, 0.45),
    ];

    #[test]
    fn identical_keypoints_give_zero_flow() {
        let k = set(&TEN);
        let f = dense_flow(&k, &k, DEFAULT_SIGMA, 32, 24).unwrap();
        assert!(f.vectors.iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn uniform_shift_gives_uniform_flow() {
        // Driving is the source moved by +0.1 in x, so every pixel samples
        // 0.1 to the left: flow = source - driving = (-0.1, 0).
        let src = set(&TEN);
        let drv = set(&TEN.map(|(x, y)| (x + 0.1, y)));
        let f = dense_flow(&src, &drv, DEFAULT_SIGMA, 40, 40).unwrap();
        for v in &f.vectors {
            assert!((v[0] + 0.1).abs() < 1e-6 && v[1].abs() < 1e-6, "{v:?}");
        }
        // Swapping roles yields the +0.1 field.
        let f = dense_flow(&drv, &src, DEFAULT_SIGMA, 40, 40).unwrap();
        assert!(f.vectors.iter().all(|v| (v[0] - 0.1).abs() < 1e-6));
    }

    #[test]
    fn opposite_displacements_cancel_at_midpoint() {
        // Driving points at (-0.5, 0) and (0.5, 0) moved by (+1, 0) and (-1, 0)
        // in the source. The pixel column at x = 0 is equidistant, so both
        // weights are 1/2 and the translations cancel.
        let drv = set(&[(-0.5, 0.0), (0.5, 0.0)]);
        let src = set(&[(0.5, 0.0), (-0.5, 0.0)]);
        // Width 33: the centre column 16 maps to normalized x = 0 exactly.
        let f = dense_flow(&src, &drv, 0.3, 33, 33).unwrap();
        for y in 0..33 {
            let v = f.at(16, y);
            assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12, "{v:?}");
        }
        // Brute-force check of one off-centre pixel against the closed form.
        let z = [to_normalized(20.0, 33), to_normalized(5.0, 33)];
        let e = |px: f64| (-((z[0] - px).powi(2) + z[1].powi(2)) / (2.0 * 0.09)).exp();
        let (wl, wr) = (e(-0.5), e(0.5));
        let expect = (wl * 1.0 + wr * -1.0) / (wl + wr);
        assert!((f.at(20, 5)[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn count_mismatch_rejected() {
        let a = set(&TEN);
        let b = set(&TEN[..9]);
        assert!(matches!(
            dense_flow(&a, &b, DEFAULT_SIGMA, 16, 16),
            Err(Error::KeypointCountMismatch { left: 10, right: 9 })
        ));
        assert!(ReferenceWarp::default().reconstruct(&gradient(16, 16), &a, &b).is_err());
    }

    #[test]
    fn zero_flow_is_identity() {
        let g = gradient(48, 40);
        assert_eq!(warp(&g, &DenseFlow::zero(48, 40)).unwrap(), g);
        assert!(matches!(warp(&g, &DenseFlow::zero(40, 40)), Err(Error::FlowSizeMismatch { .. })));
    }

    #[test]
    fn one_pixel_shift_is_exact() {
        let g = gradient(48, 40);
        let mut flow = DenseFlow::zero(48, 40);
        flow.vectors.iter_mut().for_each(|v| v[0] = 2.0 / 48.0);
        let out = warp(&g, &flow).unwrap();
        for y in 0..40 {
            for x in 0..47 {
                assert_eq!(out.pixel(x, y), g.pixel(x + 1, y));
            }
        }
    }

    #[test]
    fn forward_backward_warp_is_near_identity() {
        let img = smooth(96, 96);
        let mut flow = DenseFlow::zero(96, 96);
        for y in 0..96 {
            for x in 0..96 {
                let (u, v) = (x as f64 / 96.0, y as f64 / 96.0);
                flow.vectors[y * 96 + x] = [0.03 * (u * 3.0).sin(), 0.02 * (v * 2.5).cos()];
            }
        }
        let there = warp(&img, &flow).unwrap();
        let back = warp(&there, &flow.negated()).unwrap();
        let p = psnr(&img, &back).unwrap();
        assert!(p >= 30.0, "psnr {p}");
    }

    #[test]
    fn reconstruct_with_same_keypoints_is_pivot() {
        let g = smooth(64, 64);
        let k = set(&TEN);
        assert_eq!(ReferenceWarp::default().reconstruct(&g, &k, &k).unwrap(), g);
    }

    #[test]
    fn synthesize_requires_frames() {
        assert!(matches!(synthesize_sequence(&gradient(16, 16), &[], 0.1), Err(Error::EmptySequence)));
        let k = set(&TEN);
        let frames = synthesize_sequence(&gradient(16, 16), &vec![k; 4], 0.1).unwrap();
        assert!(frames.iter().all(|f| f.pixels() == gradient(16, 16).pixels()));
        assert_eq!(frames[3].index(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn weights_sum_to_one(
            pts in prop::collection::vec((-1.0f32..=1.0, -1.0f32..=1.0), 1..12),
            zx in -1.0f64..1.0, zy in -1.0f64..1.0, sigma in 0.02f64..0.5,
        ) {
            let k = set(&pts);
            let s: f64 = kernel_weights(&k, sigma, [zx, zy]).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }

        #[test]
        fn flow_is_translation_equivariant(
            pts in prop::collection::vec((-0.6f32..=0.6, -0.6f32..=0.6, -0.1f32..=0.1, -0.1f32..=0.1), 2..8),
            shift_px in 1usize..6,
        ) {
            let w = 32usize;
            let delta = (2 * shift_px) as f32 / w as f32;
            let drv = set(&pts.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
            let src = set(&pts.iter().map(|p| (p.0 + p.2, p.1 + p.3)).collect::<Vec<_>>());
            let drv2 = set(&pts.iter().map(|p| (p.0 + delta, p.1)).collect::<Vec<_>>());
            let src2 = set(&pts.iter().map(|p| (p.0 + p.2 + delta, p.1 + p.3)).collect::<Vec<_>>());
            let a = dense_flow(&src, &drv, 0.15, w, w).unwrap();
            let b = dense_flow(&src2, &drv2, 0.15, w, w).unwrap();
            for y in 0..w {
                for x in 0..w - shift_px {
                    let (u, v) = (a.at(x, y), b.at(x + shift_px, y));
                    prop_assert!((u[0] - v[0]).abs() < 1e-5 && (u[1] - v[1]).abs() < 1e-5);
                }
            }
        }
    }
}
