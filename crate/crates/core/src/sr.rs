//! Patch-wise output enhancement.
//!
//! The whole frame is first resampled with a Catmull-Rom bicubic kernel, then
//! cut into k×k tiles that an [`SrBackend`] processes independently before
//! they are stitched back. Tiles overlap when `stride < k`; overlapping
//! contributions are blended with a separable Hann window.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Frame;
use crate::warp::to_u8;

pub const MIN_PATCH: usize = 8;

/// An RGB tile. Unlike [`Frame`] it may be smaller than 16×16.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Patch {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "patch {width}x{height} with {} samples",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_frame(f: &Frame) -> Self {
        Self { width: f.width(), height: f.height(), pixels: f.pixels().to_vec() }
    }

    pub fn into_frame(self, index: u32) -> Result<Frame> {
        Frame::new(self.width, self.height, self.pixels, index)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Catmull-Rom cubic (a = -0.5).
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Normalized taps for each output sample along one axis. When shrinking,
/// the kernel is stretched by the scale factor so it also low-passes.
fn axis_taps(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = input as f64 / output as f64;
    let stretch = scale.max(1.0);
    let radius = 2.0 * stretch;
    (0..output)
        .map(|o| {
            let centre = (o as f64 + 0.5) * scale - 0.5;
            let lo = (centre - radius).floor() as i64 + 1;
            let hi = (centre + radius).floor() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|i| {
                    let w = catmull_rom((i as f64 - centre) / stretch);
                    (w != 0.0).then(|| (i.clamp(0, input as i64 - 1) as usize, w))
                })
                .collect();
            let sum: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= sum);
            taps
        })
        .collect()
}

fn resample_rgb(w: usize, h: usize, src: &[u8], out_w: usize, out_h: usize) -> Vec<u8> {
    let xt = axis_taps(w, out_w);
    let yt = axis_taps(h, out_h);
    // Horizontal pass, kept in f64.
    let mut mid = vec![0.0f64; h * out_w * 3];
    mid.par_chunks_mut(out_w * 3).enumerate().for_each(|(y, row)| {
        let line = &src[y * w * 3..(y + 1) * w * 3];
        for (out, taps) in row.chunks_exact_mut(3).zip(&xt) {
            let mut acc = [0.0f64; 3];
            for &(i, wt) in taps {
                let px = &line[i * 3..i * 3 + 3];
                acc[0] += wt * px[0] as f64;
                acc[1] += wt * px[1] as f64;
                acc[2] += wt * px[2] as f64;
            }
            out.copy_from_slice(&acc);
        }
    });
    let mut out = vec![0u8; out_w * out_h * 3];
    out.par_chunks_mut(out_w * 3).enumerate().for_each(|(y, row)| {
        let mut acc = vec![0.0f64; out_w * 3];
        for &(j, wt) in &yt[y] {
            let line = &mid[j * out_w * 3..(j + 1) * out_w * 3];
            acc.iter_mut().zip(line).for_each(|(a, v)| *a += wt * v);
        }
        row.iter_mut().zip(&acc).for_each(|(o, a)| *o = to_u8(*a));
    });
    out
}

pub fn bicubic_resample(img: &Frame, out_w: usize, out_h: usize) -> Result<Frame> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument("zero output dimension".into()));
    }
    let pixels = resample_rgb(img.width(), img.height(), img.pixels(), out_w, out_h);
    Frame::new(out_w, out_h, pixels, img.index())
}

pub fn bicubic_resample_patch(p: &Patch, out_w: usize, out_h: usize) -> Result<Patch> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument("zero output dimension".into()));
    }
    Patch::new(out_w, out_h, resample_rgb(p.width, p.height, &p.pixels, out_w, out_h))
}

/// Training-pair corruption: bicubic down by `factor` then back up to the
/// original size.
pub fn degrade_for_training(patch: &Patch, factor: f64) -> Result<Patch> {
    if !(2.0..=6.0).contains(&factor) {
        return Err(Error::InvalidArgument(if factor < 2.0 {
            format!("factor below 2: {factor}")
        } else {
            format!("factor above 6: {factor}")
        }));
    }
    let dw = ((patch.width as f64 / factor).round() as usize).max(1);
    let dh = ((patch.height as f64 / factor).round() as usize).max(1);
    let small = bicubic_resample_patch(patch, dw, dh)?;
    bicubic_resample_patch(&small, patch.width, patch.height)
}

/// Tile layout over an edge-padded image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub k: usize,
    pub stride: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    /// Row-major tile origins in padded coordinates.
    pub origins: Vec<(usize, usize)>,
}

fn padded_extent(n: usize, k: usize, stride: usize) -> usize {
    let n = n.max(k);
    k + (n - k).div_ceil(stride) * stride
}

pub fn tile(width: usize, height: usize, k: usize, stride: usize) -> Result<PatchGrid> {
    if k < MIN_PATCH {
        return Err(Error::InvalidArgument(format!("patch size {k} below {MIN_PATCH}")));
    }
    if stride == 0 || stride > k {
        return Err(Error::InvalidArgument(format!("stride {stride} must be in 1..={k}")));
    }
    let pw = padded_extent(width, k, stride);
    let ph = padded_extent(height, k, stride);
    let origins = (0..=(ph - k))
        .step_by(stride)
        .flat_map(|y| (0..=(pw - k)).step_by(stride).map(move |x| (x, y)))
        .collect();
    Ok(PatchGrid {
        k,
        stride,
        image_width: width,
        image_height: height,
        padded_width: pw,
        padded_height: ph,
        origins,
    })
}

/// Enhances one tile. Must return a tile of the same shape.
pub trait SrBackend: Send + Sync {
    fn enhance(&self, patch: &Patch) -> Result<Patch>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySr;

impl SrBackend for IdentitySr {
    fn enhance(&self, patch: &Patch) -> Result<Patch> {
        Ok(patch.clone())
    }
}

/// `x + amount * (x - blur3x3(x))` with a [1 2 1] Gaussian, edges clamped
/// inside the tile.
#[derive(Clone, Copy, Debug)]
pub struct UnsharpSr {
    pub amount: f64,
}

impl Default for UnsharpSr {
    fn default() -> Self {
        Self { amount: 0.5 }
    }
}

impl SrBackend for UnsharpSr {
    fn enhance(&self, p: &Patch) -> Result<Patch> {
        let (w, h) = (p.width, p.height);
        // Integer [1 2 1] x [1 2 1] blur with clamped edges; exact.
        let stride = w * 3;
        let mut vert = vec![0u32; w * h * 3];
        for y in 0..h {
            let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let rows = (&p.pixels[up * stride..], &p.pixels[y * stride..], &p.pixels[down * stride..]);
            for (i, v) in vert[y * stride..(y + 1) * stride].iter_mut().enumerate() {
                *v = rows.0[i] as u32 + 2 * rows.1[i] as u32 + rows.2[i] as u32;
            }
        }
        let mut out = vec![0u8; p.pixels.len()];
        for y in 0..h {
            let v = &vert[y * stride..(y + 1) * stride];
            let src = &p.pixels[y * stride..(y + 1) * stride];
            let dst = &mut out[y * stride..(y + 1) * stride];
            for i in 0..stride {
                let l = if i >= 3 { i - 3 } else { i };
                let r = if i + 3 < stride { i + 3 } else { i };
                let blur = v[l] + 2 * v[i] + v[r];
                let x = src[i] as f64;
                dst[i] = to_u8(x + self.amount * (x - blur as f64 / 16.0));
            }
        }
        Patch::new(w, h, out)
    }
}

fn hann(i: usize, k: usize) -> f64 {
    let s = (std::f64::consts::PI * (i as f64 + 0.5) / k as f64).sin();
    s * s
}

/// Runs `backend` over every tile of `img` and stitches the result.
pub fn enhance_image(img: &Frame, k: usize, stride: usize, backend: &dyn SrBackend) -> Result<Frame> {
    let grid = tile(img.width(), img.height(), k, stride)?;
    let (w, h) = img.dims();
    let (pw, ph) = (grid.padded_width, grid.padded_height);

    let extract = |ox: usize, oy: usize| {
        let mut px = Vec::with_capacity(k * k * 3);
        let src = img.pixels();
        for y in oy..oy + k {
            let row = &src[y.min(h - 1) * w * 3..(y.min(h - 1) + 1) * w * 3];
            let inside = w.saturating_sub(ox).min(k);
            if inside > 0 {
                px.extend_from_slice(&row[ox * 3..(ox + inside) * 3]);
            }
            for _ in inside..k {
                px.extend_from_slice(&row[(w - 1) * 3..w * 3]);
            }
        }
        Patch { width: k, height: k, pixels: px }
    };

    let enhanced: Vec<Patch> = grid
        .origins
        .par_iter()
        .map(|&(ox, oy)| {
            let out = backend.enhance(&extract(ox, oy))?;
            if (out.width, out.height) != (k, k) || out.pixels.len() != k * k * 3 {
                return Err(Error::BackendShape { expected: (k, k), actual: (out.width, out.height) });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut pixels = vec![0u8; w * h * 3];
    if stride == k {
        for (&(ox, oy), p) in grid.origins.iter().zip(&enhanced) {
            let xe = (ox + k).min(w);
            if ox >= xe {
                continue;
            }
            for y in oy..(oy + k).min(h) {
                let src = ((y - oy) * k) * 3;
                pixels[(y * w + ox) * 3..(y * w + xe) * 3]
                    .copy_from_slice(&p.pixels[src..src + (xe - ox) * 3]);
            }
        }
    } else {
        let win: Vec<f64> = (0..k).map(|i| hann(i, k)).collect();
        let mut acc = vec![0.0f64; pw * ph * 3];
        let mut wsum = vec![0.0f64; pw * ph];
        for (&(ox, oy), p) in grid.origins.iter().zip(&enhanced) {
            for j in 0..k {
                for i in 0..k {
                    let wt = win[i] * win[j];
                    let d = (oy + j) * pw + ox + i;
                    wsum[d] += wt;
                    for c in 0..3 {
                        acc[d * 3 + c] += wt * p.pixels[(j * k + i) * 3 + c] as f64;
                    }
                }
            }
        }
        for y in 0..h {
            for x in 0..w {
                let d = y * pw + x;
                for c in 0..3 {
                    pixels[(y * w + x) * 3 + c] = to_u8(acc[d * 3 + c] / wsum[d]);
                }
            }
        }
    }
    Frame::new(w, h, pixels, img.index())
}

/// Bicubic upscale by `factor` followed by tiled enhancement.
pub fn super_resolve(
    img: &Frame,
    factor: usize,
    k: usize,
    stride: usize,
    backend: &dyn SrBackend,
) -> Result<Frame> {
    let up = if factor == 1 {
        img.clone()
    } else {
        bicubic_resample(img, img.width() * factor, img.height() * factor)?
    };
    enhance_image(&up, k, stride, backend)
}
