//! Session plumbing behind the command-line tool: manifests, the five
//! commands, and the ablation sweeps.
//!
//! Manifests and sweep specs are plain `key = value` text; `#` starts a
//! comment. Relative paths resolve against the file's directory.
//!
//! ```text
//! input = frames/           # PNG directory or .y4m file
//! keypoints = keypoints.txt
//! output = clip.thc
//! interp_frames = 1
//! policy = on
//! pose = poses.txt
//! gamma = 30
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitstream::{read_stream, write_stream, PacketKind, RateLedger};
use crate::channel::{transmit, ChannelConfig, ChannelMode, ChannelReport};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{bpp, evaluate, BppMode, EvalReport};
use crate::model::{Frame, KeyPointSet, PivotThresholds, PoseAngles, StreamConfig};
use crate::pipeline::{DecodedStream, Decoder, EncodedStream, Encoder, PivotSignals, SidecarKeypoints};
use crate::pivot::{FaceMask, PivotPolicy};
use crate::sr::{bicubic_resample, IdentitySr, SrBackend, UnsharpSr};
use crate::synthetic::{self, ClipKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrChoice {
    Identity,
    #[default]
    Unsharp,
}

impl SrChoice {
    pub fn backend(self) -> &'static dyn SrBackend {
        static UNSHARP: UnsharpSr = UnsharpSr { amount: 0.5 };
        match self {
            Self::Identity => &IdentitySr,
            Self::Unsharp => &UNSHARP,
        }
    }
}

impl FromStr for SrChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "unsharp" => Ok(Self::Unsharp),
            _ => Err(Error::InvalidArgument(format!("unknown SR backend {s:?} (identity, unsharp)"))),
        }
    }
}

/// Parsed `key = value` lines, each key at most once.
#[derive(Debug, Default)]
struct KeyValues {
    entries: BTreeMap<String, String>,
    base: PathBuf,
}

impl KeyValues {
    fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(vec![format!("line {}: expected key = value", n + 1)]))?;
            let k = k.trim().to_ascii_lowercase();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(vec![format!("line {}: duplicate key {k:?}", n + 1)]));
            }
        }
        Ok(Self { entries, base: base.to_path_buf() })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// First present key among aliases.
    fn take_any(&mut self, keys: &[&str]) -> Option<String> {
        let found: Vec<String> = keys.iter().filter_map(|k| self.take(k)).collect();
        found.into_iter().next()
    }

    fn path(&mut self, keys: &[&str]) -> Option<PathBuf> {
        self.take_any(keys).map(|v| self.base.join(v))
    }

    fn parsed<T: FromStr>(&mut self, keys: &[&str]) -> Result<Option<T>> {
        match self.take_any(keys) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(vec![format!("{}: cannot parse {v:?}", keys[0])])),
        }
    }

    fn flag(&mut self, keys: &[&str]) -> Result<Option<bool>> {
        match self.take_any(keys).as_deref() {
            None => Ok(None),
            Some("on" | "true" | "yes" | "1") => Ok(Some(true)),
            Some("off" | "false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(Error::Config(vec![format!("{}: expected on/off, got {v:?}", keys[0])])),
        }
    }

    fn list<T: FromStr>(&mut self, keys: &[&str]) -> Result<Option<Vec<T>>> {
        match self.take_any(keys) {
            None => Ok(None),
            Some(v) => v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::Config(vec![format!("{}: cannot parse {s:?}", keys[0])])))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self.entries.keys().map(|k| format!("unknown key {k:?}")).collect()))
        }
    }
}

/// Stream, policy and channel settings shared by manifests and sweep specs.
fn take_common(kv: &mut KeyValues, stream: &mut StreamConfig, channel: &mut ChannelConfig) -> Result<()> {
    if let Some(v) = kv.parsed(&["num_keypoints", "kp"])? {
        stream.num_keypoints = v;
    }
    if let Some(v) = kv.parsed(&["interp_frames", "interp"])? {
        stream.interp_frames = v;
    }
    if let Some(v) = kv.parsed(&["sr_factor", "sr"])? {
        stream.sr_factor = v;
    }
    if let Some(v) = kv.parsed(&["sr_patch", "patch"])? {
        stream.sr_patch = v;
    }
    if let Some(v) = kv.parsed(&["fps"])? {
        stream.fps = v;
    }
    let th = &mut stream.pivot_policy;
    if let Some(g) = kv.parsed::<f64>(&["gamma"])? {
        (th.gamma_yaw, th.gamma_roll, th.gamma_pitch) = (g, g, g);
    }
    for (key, slot) in [("gamma_yaw", &mut th.gamma_yaw), ("gamma_roll", &mut th.gamma_roll), ("gamma_pitch", &mut th.gamma_pitch)]
    {
        if let Some(v) = kv.parsed(&[key])? {
            *slot = v;
        }
    }
    if let Some(v) = kv.parsed(&["d_bg", "dbg"])? {
        th.d_bg = v;
    }
    if let Some(v) = kv.parsed::<f64>(&["loss"])? {
        channel.loss_rate = v;
        channel.mode = if v > 0.0 { ChannelMode::Lossy } else { ChannelMode::ReliableOrdered };
    }
    if let Some(v) = kv.parsed(&["seed"])? {
        channel.seed = v;
    }
    if let Some(v) = kv.parsed(&["bandwidth"])? {
        channel.bandwidth_bits_per_s = Some(v);
    }
    if let Some(v) = kv.parsed(&["latency"])? {
        channel.latency_ms = v;
    }
    Ok(())
}

/// Everything one encode → transmit → decode → evaluate session needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub keypoints: Option<PathBuf>,
    pub pose: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Width and height are taken from the input frames.
    pub stream: StreamConfig,
    pub policy: bool,
    pub cooldown: Option<u32>,
    pub channel: ChannelConfig,
    pub overlap: bool,
    pub sr_backend: SrChoice,
}

impl SessionManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text, base)?;
        let mut m = Self {
            input: kv.path(&["input"]),
            output: kv.path(&["output"]),
            keypoints: kv.path(&["keypoints"]),
            pose: kv.path(&["pose"]),
            masks: kv.path(&["masks"]),
            ledger: kv.path(&["ledger"]),
            report: kv.path(&["report"]),
            ..Default::default()
        };
        take_common(&mut kv, &mut m.stream, &mut m.channel)?;
        m.policy = kv.flag(&["policy"])?.unwrap_or(false);
        m.cooldown = kv.parsed(&["cooldown"])?;
        m.overlap = kv.flag(&["overlap"])?.unwrap_or(false);
        if let Some(b) = kv.parsed(&["sr_backend"])? {
            m.sr_backend = b;
        }
        kv.finish()?;
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn pivot_policy(&self) -> Option<PivotPolicy> {
        self.policy.then_some(PivotPolicy { thresholds: self.stream.pivot_policy, cooldown: self.cooldown })
    }

    /// Referenced inputs exist and the settings are in range.
    pub fn validate(&self) -> Result<()> {
        let mut errs = self.stream.violations();
        if let Err(Error::Config(v)) = self.channel.validate() {
            errs.extend(v);
        }
        for (name, p) in [("input", &self.input), ("keypoints", &self.keypoints), ("pose", &self.pose), ("masks", &self.masks)] {
            if let Some(p) = p {
                if !p.exists() {
                    errs.push(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// The rate sidecar written next to an encoded stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerFile {
    #[serde(flatten)]
    pub ledger: RateLedger,
    pub replacement_indices: Vec<u32>,
}

/// `clip.thc` → `clip.ledger.json`.
pub fn ledger_path(stream: &Path) -> PathBuf {
    stream.with_extension("ledger.json")
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::InvalidArgument(format!("{what} path is required")))
}

/// Reads pose and optional mask sidecars for the policy.
fn load_signals(pose: Option<&Path>, masks: Option<&Path>) -> Result<(Vec<PoseAngles>, Option<Vec<FaceMask>>)> {
    let pose = pose.ok_or_else(|| {
        Error::MissingSidecar("the pivot policy is enabled but no pose sidecar was given".into())
    })?;
    Ok((io::read_poses(pose)?, masks.map(io::read_masks).transpose()?))
}

/// Encodes in memory. `poses` is required when `policy` is set.
pub fn encode_frames(
    frames: &[Frame],
    keypoints: &[KeyPointSet],
    mut stream: StreamConfig,
    policy: Option<PivotPolicy>,
    poses: Option<&[PoseAngles]>,
    masks: Option<&[FaceMask]>,
) -> Result<EncodedStream> {
    let first = frames.first().ok_or(Error::EmptySequence)?;
    stream.width = first.width() as u32;
    stream.height = first.height() as u32;
    let mut enc = Encoder::new(stream);
    if let Some(p) = policy {
        enc = enc.with_policy(p);
    }
    let signals = poses.map(|poses| PivotSignals { poses, masks });
    enc.encode(frames, &SidecarKeypoints::new(keypoints.iter().cloned()), signals)
}

/// Reads frames and sidecars, writes the `.thc` stream and its ledger.
pub fn cmd_encode(m: &SessionManifest) -> Result<EncodedStream> {
    m.validate()?;
    let input = required(&m.input, "input")?;
    let output = required(&m.output, "output")?;
    let frames = io::read_frames(input)?;
    let keypoints = io::read_keypoints(m.keypoints.as_deref().ok_or_else(|| {
        Error::MissingSidecar("no keypoint detector is bundled; pass a keypoint sidecar".into())
    })?)?;
    let policy = m.pivot_policy();
    let (poses, masks) = match policy {
        Some(_) => {
            let (p, k) = load_signals(m.pose.as_deref(), m.masks.as_deref())?;
            (Some(p), k)
        }
        None => (None, None),
    };
    let enc = encode_frames(&frames, &keypoints, m.stream.clone(), policy, poses.as_deref(), masks.as_deref())?;
    write_stream(&enc.packets, std::io::BufWriter::new(fs::File::create(output)?))?;
    let ledger = LedgerFile { ledger: enc.ledger, replacement_indices: enc.replacements.clone() };
    io::write_json(&m.ledger.clone().unwrap_or_else(|| ledger_path(output)), &ledger)?;
    Ok(enc)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Overrides the stream's upscale factor.
    pub sr: Option<u8>,
    /// Overrides the stream's patch size.
    pub patch: Option<usize>,
    pub overlap: bool,
    pub backend: SrChoice,
}

pub fn decode_packets(packets: &[crate::bitstream::Packet], opts: &DecodeOptions) -> Result<DecodedStream> {
    if let Some(f) = opts.sr {
        if !matches!(f, 1 | 2) {
            return Err(Error::Config(vec!["sr_factor must be 1 or 2".into()]));
        }
    }
    let dec = Decoder { sr_factor: opts.sr, patch: opts.patch, overlap: opts.overlap, ..Decoder::default() }
        .with_sr(opts.backend.backend());
    dec.decode(packets)
}

pub fn cmd_decode(input: &Path, output: &Path, opts: &DecodeOptions) -> Result<DecodedStream> {
    let packets = read_stream(std::io::BufReader::new(fs::File::open(input)?))?;
    let decoded = decode_packets(&packets, opts)?;
    io::write_png_dir(output, &decoded.frames)?;
    Ok(decoded)
}

/// Passes a stream file through the channel model and writes what arrives.
pub fn cmd_simulate(input: &Path, output: &Path, cfg: &ChannelConfig, report: Option<&Path>) -> Result<ChannelReport> {
    let packets = read_stream(std::io::BufReader::new(fs::File::open(input)?))?;
    let (delivered, rep) = transmit(&packets, cfg)?;
    write_stream(&delivered, std::io::BufWriter::new(fs::File::create(output)?))?;
    if let Some(r) = report {
        io::write_json(r, &rep)?;
    }
    Ok(rep)
}

pub fn cmd_evaluate(
    reference: &Path,
    outputs: &Path,
    ledger: &Path,
    report: &Path,
    channel: Option<&Path>,
) -> Result<EvalReport> {
    let refs = io::read_frames(reference)?;
    let outs = io::read_frames(outputs)?;
    let lf: LedgerFile = io::read_json(ledger)?;
    let ch: Option<ChannelReport> = channel.map(io::read_json).transpose()?;
    let rep = evaluate(&refs, &outs, &lf.ledger, lf.replacement_indices, ch)?;
    io::write_json(report, &rep)?;
    Ok(rep)
}

/// Writes a synthetic clip: `frames/`, `keypoints.txt`, `poses.txt`, `masks/`.
pub fn cmd_synth(output: &Path, kind: ClipKind, frames: usize, width: usize, height: usize) -> Result<()> {
    let clip = synthetic::clip(kind, frames, width, height)?;
    fs::create_dir_all(output)?;
    io::write_png_dir(&output.join("frames"), &clip.frames)?;
    io::write_keypoints(&output.join("keypoints.txt"), &clip.keypoints)?;
    io::write_poses(&output.join("poses.txt"), &clip.poses)?;
    io::write_masks(&output.join("masks"), &clip.masks)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ClipSource {
    Synthetic { kind: ClipKind, frames: usize, width: usize, height: usize },
    Files { input: PathBuf, keypoints: PathBuf, pose: Option<PathBuf>, masks: Option<PathBuf> },
}

/// A grid over interpolation depth `m`, patch size `k`, and the pivot
/// thresholds γ and d_bg. Axes left out stay at the base setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub source: ClipSource,
    pub base: StreamConfig,
    pub m: Vec<u8>,
    pub k: Vec<u16>,
    pub gamma: Vec<f64>,
    pub d_bg: Vec<f64>,
    pub policy: bool,
    pub cooldown: Option<u32>,
    pub channel: ChannelConfig,
    /// Decode and score every grid point; off reports rate only.
    pub quality: bool,
    pub overlap: bool,
    pub sr_backend: SrChoice,
    /// Writes `<output>.csv` and `<output>.json`.
    pub output: Option<PathBuf>,
}

impl AblationSpec {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text, base_dir)?;
        let source = match kv.path(&["input"]) {
            Some(input) => ClipSource::Files {
                input,
                keypoints: kv
                    .path(&["keypoints"])
                    .ok_or_else(|| Error::MissingSidecar("sweep over files needs a keypoint sidecar".into()))?,
                pose: kv.path(&["pose"]),
                masks: kv.path(&["masks"]),
            },
            None => ClipSource::Synthetic {
                kind: kv.parsed(&["clip"])?.unwrap_or(ClipKind::Linear),
                frames: kv.parsed(&["frames"])?.unwrap_or(300),
                width: kv.parsed(&["width"])?.unwrap_or(256),
                height: kv.parsed(&["height"])?.unwrap_or(256),
            },
        };
        let mut base = StreamConfig::default();
        let mut channel = ChannelConfig::default();
        take_common(&mut kv, &mut base, &mut channel)?;
        let axes = (
            kv.list(&["sweep_m", "m"])?,
            kv.list(&["sweep_k", "k"])?,
            kv.list(&["sweep_gamma"])?,
            kv.list(&["sweep_d_bg", "sweep_dbg"])?,
        );
        if axes.0.is_none() && axes.1.is_none() && axes.2.is_none() && axes.3.is_none() {
            return Err(Error::Config(vec!["empty sweep: no sweep axis given".into()]));
        }
        let threshold_axis = axes.2.is_some() || axes.3.is_some();
        let th = base.pivot_policy;
        let spec = Self {
            source,
            m: axes.0.unwrap_or_else(|| vec![base.interp_frames]),
            k: axes.1.unwrap_or_else(|| vec![base.sr_patch]),
            gamma: axes.2.unwrap_or_else(|| vec![th.gamma_yaw]),
            d_bg: axes.3.unwrap_or_else(|| vec![th.d_bg]),
            policy: kv.flag(&["policy"])?.unwrap_or(threshold_axis),
            cooldown: kv.parsed(&["cooldown"])?,
            channel,
            quality: kv.flag(&["quality"])?.unwrap_or(true),
            overlap: kv.flag(&["overlap"])?.unwrap_or(false),
            sr_backend: kv.parsed(&["sr_backend"])?.unwrap_or_default(),
            output: kv.path(&["output"]),
            base,
        };
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Grid points in row order: m outermost, then k, γ, d_bg.
    pub fn grid(&self) -> Vec<(u8, u16, f64, f64)> {
        let mut out = Vec::new();
        for &m in &self.m {
            for &k in &self.k {
                for &g in &self.gamma {
                    for &d in &self.d_bg {
                        out.push((m, k, g, d));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.m.is_empty() || self.k.is_empty() || self.gamma.is_empty() || self.d_bg.is_empty() {
            errs.push("empty sweep: an axis has no values".to_string());
        }
        for (m, k, g, d) in self.grid() {
            let mut cfg = self.base.clone();
            cfg.interp_frames = m;
            cfg.sr_patch = k;
            cfg.pivot_policy = PivotThresholds::uniform(g, d);
            errs.extend(cfg.violations().into_iter().map(|e| format!("m={m} k={k} gamma={g} d_bg={d}: {e}")));
        }
        if let Err(Error::Config(v)) = self.channel.validate() {
            errs.extend(v);
        }
        errs.dedup();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// One grid point of an ablation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub m: u8,
    pub k: u16,
    pub gamma: f64,
    pub d_bg: f64,
    pub frames: u64,
    pub output_width: usize,
    pub output_height: usize,
    pub keyed_packets: usize,
    pub replacements: usize,
    pub dropped: usize,
    pub bpp_paper: f64,
    pub bpp_full: f64,
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
}

struct LoadedClip {
    frames: Vec<Frame>,
    keypoints: Vec<KeyPointSet>,
    poses: Option<Vec<PoseAngles>>,
    masks: Option<Vec<FaceMask>>,
}

fn load_clip(src: &ClipSource, need_poses: bool) -> Result<LoadedClip> {
    match src {
        ClipSource::Synthetic { kind, frames, width, height } => {
            let c = synthetic::clip(*kind, *frames, *width, *height)?;
            Ok(LoadedClip { frames: c.frames, keypoints: c.keypoints, poses: Some(c.poses), masks: Some(c.masks) })
        }
        ClipSource::Files { input, keypoints, pose, masks } => {
            let (poses, masks) = if need_poses {
                let (p, m) = load_signals(pose.as_deref(), masks.as_deref())?;
                (Some(p), m)
            } else {
                (None, None)
            };
            Ok(LoadedClip { frames: io::read_frames(input)?, keypoints: io::read_keypoints(keypoints)?, poses, masks })
        }
    }
}

/// Runs every grid point in order. Deterministic for a given spec.
pub fn run_ablation(spec: &AblationSpec) -> Result<Vec<AblationRow>> {
    spec.validate()?;
    let clip = load_clip(&spec.source, spec.policy)?;
    // Scoring happens at output resolution; resample the references once.
    let references = if spec.quality && spec.base.sr_factor != 1 {
        let f = spec.base.sr_factor as usize;
        clip.frames
            .par_iter()
            .map(|r| bicubic_resample(r, r.width() * f, r.height() * f))
            .collect::<Result<Vec<_>>>()?
    } else {
        clip.frames.clone()
    };
    spec.grid()
        .into_iter()
        .map(|(m, k, g, d)| {
            let mut cfg = spec.base.clone();
            cfg.interp_frames = m;
            cfg.sr_patch = k;
            cfg.pivot_policy = PivotThresholds::uniform(g, d);
            let policy = spec.policy.then_some(PivotPolicy { thresholds: cfg.pivot_policy, cooldown: spec.cooldown });
            let enc = encode_frames(
                &clip.frames,
                &clip.keypoints,
                cfg.clone(),
                policy,
                clip.poses.as_deref(),
                clip.masks.as_deref(),
            )?;
            let (ow, oh) = (clip.frames[0].width() * cfg.sr_factor as usize, clip.frames[0].height() * cfg.sr_factor as usize);
            let (delivered, ch) = transmit(&enc.packets, &spec.channel)?;
            let (psnr, ssim) = if spec.quality {
                let opts = DecodeOptions { overlap: spec.overlap, backend: spec.sr_backend, ..Default::default() };
                let dec = decode_packets(&delivered, &opts)?;
                let rep = evaluate(&references, &dec.frames, &enc.ledger, enc.replacements.clone(), None)?;
                (Some(rep.mean_psnr), Some(rep.mean_ssim))
            } else {
                (None, None)
            };
            Ok(AblationRow {
                m,
                k,
                gamma: g,
                d_bg: d,
                frames: enc.ledger.displayed_frames,
                output_width: ow,
                output_height: oh,
                keyed_packets: enc.packets.iter().filter(|p| p.kind == PacketKind::KeyPoints).count(),
                replacements: enc.replacements.len(),
                dropped: ch.dropped() as usize,
                bpp_paper: bpp(&enc.ledger, ow, oh, BppMode::Paper)?,
                bpp_full: bpp(&enc.ledger, ow, oh, BppMode::Full)?,
                mean_psnr: psnr,
                mean_ssim: ssim,
            })
        })
        .collect()
}

pub fn write_ablation(prefix: &Path, spec: &AblationSpec, rows: &[AblationRow]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(prefix.with_extension("csv")).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Out<'a> {
        spec: &'a AblationSpec,
        rows: &'a [AblationRow],
    }
    io::write_json(&prefix.with_extension("json"), &Out { spec, rows })
}

pub fn cmd_ablate(spec_path: &Path) -> Result<Vec<AblationRow>> {
    let spec = AblationSpec::from_file(spec_path)?;
    let rows = run_ablation(&spec)?;
    let prefix = spec.output.clone().unwrap_or_else(|| spec_path.with_extension("ablation"));
    write_ablation(&prefix, &spec, &rows)?;
    Ok(rows)
}
