//! Quality and rate metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitstream::RateLedger;
use crate::channel::ChannelReport;
use crate::error::{Error, Result};
use crate::model::Frame;
use crate::sr::bicubic_resample;

/// Reported for identical frames instead of +inf.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn check_dims(a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a, b)?;
    let sum: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.pixels().len() as f64)
}

/// PSNR over all three channels, in dB.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (255.0f64 * 255.0 / m).log10()).min(PSNR_CAP))
}

/// Normalized 1-D Gaussian window.
pub fn gaussian_window(len: usize, sigma: f64) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..len).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable correlation of a `w`×`h` plane with `win`.
fn filter_valid(plane: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let n = win.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut horiz = vec![0.0; ow * h];
    for (src, dst) in plane.chunks_exact(w).zip(horiz.chunks_exact_mut(ow)) {
        for (i, k) in win.iter().enumerate() {
            dst.iter_mut().zip(&src[i..i + ow]).for_each(|(d, v)| *d += k * v);
        }
    }
    let mut out = vec![0.0; ow * oh];
    for (y, dst) in out.chunks_exact_mut(ow).enumerate() {
        for (j, k) in win.iter().enumerate() {
            let src = &horiz[(y + j) * ow..(y + j + 1) * ow];
            dst.iter_mut().zip(src).for_each(|(d, v)| *d += k * v);
        }
    }
    out
}

/// Mean SSIM on BT.601 luma with an 11×11 Gaussian window (σ = 1.5),
/// evaluated at every window position fully inside the frame.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::FrameTooSmall(w, h));
    }
    if a.pixels() == b.pixels() {
        return Ok(1.0);
    }
    let x = a.luma();
    let y = b.luma();
    let win = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, w, h, &win);
    let my = filter_valid(&y, w, h, &win);
    let mxx = filter_valid(&prod(&x, &x), w, h, &win);
    let myy = filter_valid(&prod(&y, &y), w, h, &win);
    let mxy = filter_valid(&prod(&x, &y), w, h, &win);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BppMode {
    /// Keypoint payload bits only.
    Paper,
    /// Every transmitted bit: keypoints, pivots, headers.
    Full,
}

/// Bits per displayed output pixel.
pub fn bpp(ledger: &RateLedger, out_w: usize, out_h: usize, mode: BppMode) -> Result<f64> {
    if ledger.displayed_frames == 0 {
        return Err(Error::ZeroFrames);
    }
    let bits = match mode {
        BppMode::Paper => ledger.keypoint_payload_bits,
        BppMode::Full => ledger.total_bits(),
    };
    Ok(bits as f64 / (ledger.displayed_frames as f64 * out_w as f64 * out_h as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub index: u32,
    pub psnr: f64,
    pub ssim: f64,
}

/// Serialized as the evaluation JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: Vec<FrameScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub bpp_paper: f64,
    pub bpp_full: f64,
    pub output_width: usize,
    pub output_height: usize,
    pub ledger: RateLedger,
    pub replacement_indices: Vec<u32>,
    pub channel: Option<ChannelReport>,
    /// Reserved for external tooling; never computed here.
    pub fid: Option<f64>,
}

/// Scores `outputs` against `references`. References at a different
/// resolution are bicubic-resampled to the output resolution first.
pub fn evaluate(
    references: &[Frame],
    outputs: &[Frame],
    ledger: &RateLedger,
    replacement_indices: Vec<u32>,
    channel: Option<ChannelReport>,
) -> Result<EvalReport> {
    if references.len() != outputs.len() {
        return Err(Error::InvalidArgument(format!(
            "frame count mismatch: {} reference vs {} output",
            references.len(),
            outputs.len()
        )));
    }
    let first = outputs.first().ok_or(Error::ZeroFrames)?;
    let (ow, oh) = first.dims();
    let frames = references
        .par_iter()
        .zip(outputs)
        .enumerate()
        .map(|(i, (r, o))| {
            let r = if r.dims() == o.dims() { r.clone() } else { bicubic_resample(r, o.width(), o.height())? };
            Ok(FrameScore { index: i as u32, psnr: psnr(&r, o)?, ssim: ssim(&r, o)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = frames.len() as f64;
    Ok(EvalReport {
        mean_psnr: frames.iter().map(|f| f.psnr).sum::<f64>() / n,
        mean_ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
        frames,
        bpp_paper: bpp(ledger, ow, oh, BppMode::Paper)?,
        bpp_full: bpp(ledger, ow, oh, BppMode::Full)?,
        output_width: ow,
        output_height: oh,
        ledger: *ledger,
        replacement_indices,
        channel,
        fid: None,
    })
}
