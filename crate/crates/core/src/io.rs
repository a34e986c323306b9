//! Frame sequences and sidecar files on disk.
//!
//! * frames: a directory of zero-padded numbered PNGs, or a Y4M file
//! * pose sidecar: `index yaw roll pitch` per line, degrees
//! * keypoint sidecar: `index x0 y0 x1 y1 …` per line, normalized coordinates
//! * masks: one single-channel PNG per frame, nonzero = face
//!
//! Blank lines and lines starting with `#` are ignored in text sidecars.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::model::{Frame, KeyPoint, KeyPointSet, PoseAngles};
use crate::pivot::FaceMask;

pub fn frame_file_name(index: u32) -> String {
    format!("frame_{index:06}.png")
}

/// PNG files in `dir`, sorted by name.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidFrame(format!("no PNG frames in {}", dir.display())));
    }
    Ok(files)
}

pub fn read_png(path: &Path, index: u32) -> Result<Frame> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(w as usize, h as usize, img.into_raw(), index)
}

pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(frame.width() as u32, frame.height() as u32, frame.pixels())
            .expect("frame buffer matches its dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_png_dir(dir: &Path) -> Result<Vec<Frame>> {
    let frames: Vec<Frame> =
        png_files(dir)?.iter().enumerate().map(|(i, p)| read_png(p, i as u32)).collect::<Result<_>>()?;
    let dims = frames[0].dims();
    if let Some(f) = frames.iter().find(|f| f.dims() != dims) {
        return Err(Error::DimensionMismatch(f.dims(), dims));
    }
    Ok(frames)
}

pub fn write_png_dir(dir: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        write_png(&dir.join(frame_file_name(i as u32)), f)?;
    }
    Ok(())
}

/// A PNG directory, or a `.y4m` file.
pub fn read_frames(path: &Path) -> Result<Vec<Frame>> {
    if path.is_dir() {
        read_png_dir(path)
    } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m")) {
        read_y4m(path)
    } else {
        Err(Error::InvalidArgument(format!("{}: expected a PNG directory or a .y4m file", path.display())))
    }
}

fn y4m_err(e: y4m::Error) -> Error {
    match e {
        y4m::Error::IoError(e) => Error::Io(e),
        other => Error::InvalidFrame(format!("y4m: {other:?}")),
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// BT.601 studio-swing YCbCr to RGB.
fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> [u8; 3] {
    let y = 1.164_383 * (y as f64 - 16.0);
    let (cb, cr) = (cb as f64 - 128.0, cr as f64 - 128.0);
    [
        clamp_u8(y + 1.596_027 * cr),
        clamp_u8(y - 0.391_762 * cb - 0.812_968 * cr),
        clamp_u8(y + 2.017_232 * cb),
    ]
}

fn rgb_to_ycbcr([r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    [
        16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0,
        128.0 + (-37.797 * r - 74.203 * g + 112.0 * b) / 255.0,
        128.0 + (112.0 * r - 93.786 * g - 18.214 * b) / 255.0,
    ]
}

/// Reads an 8-bit Y4M file (4:2:0, 4:2:2, 4:4:4 or mono). Chroma is
/// upsampled by replication.
pub fn read_y4m(path: &Path) -> Result<Vec<Frame>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut dec = y4m::decode(file).map_err(y4m_err)?;
    let (w, h) = (dec.get_width(), dec.get_height());
    use y4m::Colorspace as C;
    let (sx, sy) = match dec.get_colorspace() {
        C::C420 | C::C420jpeg | C::C420paldv | C::C420mpeg2 => (2, 2),
        C::C422 => (2, 1),
        C::C444 | C::Cmono => (1, 1),
        other => return Err(Error::InvalidFrame(format!("unsupported y4m colorspace {other:?}"))),
    };
    let mono = matches!(dec.get_colorspace(), C::Cmono);
    let cw = w.div_ceil(sx);
    let mut frames = Vec::new();
    loop {
        let f = match dec.read_frame() {
            Ok(f) => f,
            Err(y4m::Error::EOF) => break,
            Err(e) => return Err(y4m_err(e)),
        };
        let (yp, up, vp) = (f.get_y_plane(), f.get_u_plane(), f.get_v_plane());
        let frame = Frame::from_fn(w, h, frames.len() as u32, |x, y| {
            let luma = yp[y * w + x];
            if mono {
                return ycbcr_to_rgb(luma, 128, 128);
            }
            let c = (y / sy) * cw + x / sx;
            ycbcr_to_rgb(luma, up[c], vp[c])
        })?;
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(Error::InvalidFrame(format!("{}: no frames", path.display())));
    }
    Ok(frames)
}

/// Writes 8-bit 4:2:0 Y4M; chroma is the mean of each 2×2 block.
pub fn write_y4m(path: &Path, frames: &[Frame], fps: u16) -> Result<()> {
    let first = frames.first().ok_or(Error::EmptySequence)?;
    let (w, h) = first.dims();
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let out = BufWriter::new(fs::File::create(path)?);
    let mut enc = y4m::encode(w, h, y4m::Ratio::new(fps as usize, 1))
        .with_colorspace(y4m::Colorspace::C420)
        .write_header(out)
        .map_err(y4m_err)?;
    for f in frames {
        if f.dims() != (w, h) {
            return Err(Error::DimensionMismatch(f.dims(), (w, h)));
        }
        let mut yp = vec![0u8; w * h];
        let mut acc = vec![[0.0f64; 3]; cw * ch];
        for y in 0..h {
            for x in 0..w {
                let [l, cb, cr] = rgb_to_ycbcr(f.pixel(x, y));
                yp[y * w + x] = clamp_u8(l);
                let a = &mut acc[(y / 2) * cw + x / 2];
                a[0] += cb;
                a[1] += cr;
                a[2] += 1.0;
            }
        }
        let up: Vec<u8> = acc.iter().map(|a| clamp_u8(a[0] / a[2])).collect();
        let vp: Vec<u8> = acc.iter().map(|a| clamp_u8(a[1] / a[2])).collect();
        enc.write_frame(&y4m::Frame::new([&yp, &up, &vp], None)).map_err(y4m_err)?;
    }
    Ok(())
}

/// Data lines of a text sidecar as (line number, fields).
fn sidecar_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(n, l)| (n, l.split_whitespace().collect()))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("{}:{line}: cannot parse {s:?}", path.display())))
}

/// Sorts indexed entries and requires them to be exactly 0..n.
fn dense<T>(path: &Path, mut entries: Vec<(u32, T)>) -> Result<Vec<T>> {
    entries.sort_by_key(|e| e.0);
    for (expect, (i, _)) in entries.iter().enumerate() {
        if *i as usize != expect {
            return Err(Error::MissingSidecar(format!("{}: no entry for frame {expect}", path.display())));
        }
    }
    Ok(entries.into_iter().map(|e| e.1).collect())
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseAngles>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingSidecar(format!("pose file {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (n, f) in sidecar_lines(&text) {
        if f.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "{}:{n}: expected `index yaw roll pitch`",
                path.display()
            )));
        }
        let i: u32 = parse_field(path, n, f[0])?;
        let [y, r, p] = [1, 2, 3].map(|k| parse_field::<f64>(path, n, f[k]));
        entries.push((i, PoseAngles::new(y?, r?, p?)?));
    }
    dense(path, entries)
}

pub fn write_poses(path: &Path, poses: &[PoseAngles]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for (i, p) in poses.iter().enumerate() {
        writeln!(out, "{i} {} {} {}", p.yaw, p.roll, p.pitch)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_keypoints(path: &Path) -> Result<Vec<KeyPointSet>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingSidecar(format!("keypoint file {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (n, f) in sidecar_lines(&text) {
        if f.len() < 3 || f.len() % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "{}:{n}: expected an index followed by x y pairs",
                path.display()
            )));
        }
        let i: u32 = parse_field(path, n, f[0])?;
        let points = f[1..]
            .chunks(2)
            .map(|c| Ok(KeyPoint::new(parse_field(path, n, c[0])?, parse_field(path, n, c[1])?)))
            .collect::<Result<Vec<_>>>()?;
        entries.push((i, KeyPointSet::new(i, points)?));
    }
    dense(path, entries)
}

pub fn write_keypoints(path: &Path, sets: &[KeyPointSet]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for s in sets {
        write!(out, "{}", s.frame_index)?;
        for p in s.points() {
            // Debug formatting of f32 round-trips exactly.
            write!(out, " {:?} {:?}", p.x, p.y)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_masks(dir: &Path) -> Result<Vec<FaceMask>> {
    let files = png_files(dir).map_err(|e| match e {
        Error::Io(e) => Error::MissingSidecar(format!("mask directory {}: {e}", dir.display())),
        Error::InvalidFrame(m) => Error::MissingSidecar(m),
        e => e,
    })?;
    files
        .iter()
        .map(|p| {
            let img = image::open(p)?.to_luma8();
            let (w, h) = img.dimensions();
            FaceMask::new(w as usize, h as usize, img.pixels().map(|px| px.0[0] != 0).collect())
        })
        .collect()
}

pub fn write_masks(dir: &Path, masks: &[FaceMask]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, m) in masks.iter().enumerate() {
        let (w, h) = m.dims();
        let img: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([if m.is_face(x as usize, y as usize) { 255 } else { 0 }]));
        img.save_with_format(dir.join(frame_file_name(i as u32)), image::ImageFormat::Png)?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}
