//! Sender and receiver sessions.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bitstream::{
    decode_handshake, decode_keypoints, decode_pivot, encode_handshake, encode_keypoints, encode_pivot, Packet,
    PacketKind, RateLedger,
};
use crate::channel::receiver_loss_policy;
use crate::error::{Error, Result};
use crate::interp::{build_schedule, FrameTag, InterpBackend, PivotRef, ReferenceInterp, Schedule};
use crate::model::{validate_config, Frame, KeyPointSet, PoseAngles, StreamConfig};
use crate::pivot::{apply_replacement, background_embedding, Decision, FaceMask, PivotPolicy};
use crate::sr::{super_resolve, SrBackend, UnsharpSr};
use crate::warp::{ReferenceWarp, WarpBackend};

/// Source of per-frame keypoints on the sender side.
pub trait KeypointDetector: Send + Sync {
    fn detect(&self, frame: &Frame) -> Result<KeyPointSet>;
}

/// Precomputed keypoints looked up by frame index (a keypoint sidecar, or
/// the ground truth of a synthetic clip).
#[derive(Clone, Debug)]
pub struct SidecarKeypoints {
    by_index: BTreeMap<u32, KeyPointSet>,
}

impl SidecarKeypoints {
    pub fn new(sets: impl IntoIterator<Item = KeyPointSet>) -> Self {
        Self { by_index: sets.into_iter().map(|k| (k.frame_index, k)).collect() }
    }
}

impl KeypointDetector for SidecarKeypoints {
    fn detect(&self, frame: &Frame) -> Result<KeyPointSet> {
        self.by_index
            .get(&frame.index())
            .cloned()
            .ok_or_else(|| Error::MissingSidecar(format!("no keypoints for frame {}", frame.index())))
    }
}

/// Per-frame inputs of the adaptive pivot policy.
#[derive(Clone, Copy, Debug)]
pub struct PivotSignals<'a> {
    pub poses: &'a [PoseAngles],
    /// Face masks per frame; `None` falls back to the border-band mask.
    pub masks: Option<&'a [FaceMask]>,
}

impl PivotSignals<'_> {
    fn inputs(&self, i: usize, frame: &Frame) -> Result<(PoseAngles, crate::pivot::BackgroundEmbedding)> {
        let pose = *self
            .poses
            .get(i)
            .ok_or_else(|| Error::MissingSidecar(format!("no pose for frame {i}")))?;
        let bg = match self.masks {
            Some(m) => {
                let mask = m.get(i).ok_or_else(|| Error::MissingSidecar(format!("no mask for frame {i}")))?;
                background_embedding(frame, mask)?
            }
            None => background_embedding(frame, &FaceMask::border_band(frame.width(), frame.height()))?,
        };
        Ok((pose, bg))
    }
}

#[derive(Clone, Debug)]
pub struct EncodedStream {
    pub packets: Vec<Packet>,
    pub ledger: RateLedger,
    pub schedule: Schedule,
    /// Frames that became pivots after frame 0.
    pub replacements: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: StreamConfig,
    /// `None` keeps the first pivot for the whole clip.
    pub policy: Option<PivotPolicy>,
}

impl Encoder {
    pub fn new(config: StreamConfig) -> Self {
        Self { config, policy: None }
    }

    pub fn with_policy(mut self, policy: PivotPolicy) -> Self {
        self.policy = Some(policy);
        self
    }

    pub fn encode(
        &self,
        frames: &[Frame],
        detector: &dyn KeypointDetector,
        signals: Option<PivotSignals<'_>>,
    ) -> Result<EncodedStream> {
        validate_config(&self.config)?;
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let dims = (self.config.width as usize, self.config.height as usize);
        for f in frames {
            if f.dims() != dims {
                return Err(Error::DimensionMismatch(f.dims(), dims));
            }
        }
        let policy = match (self.policy, signals) {
            (Some(p), Some(s)) => Some((p, s)),
            (Some(_), None) => {
                return Err(Error::MissingSidecar("pose data is required when the pivot policy is enabled".into()))
            }
            (None, _) => None,
        };
        let n = frames.len();
        let schedule = build_schedule(n, self.config.interp_frames)?;

        let detect = |i: usize| -> Result<KeyPointSet> {
            let frame = &frames[i];
            let k = detector.detect(frame)?;
            if k.len() != self.config.num_keypoints as usize {
                return Err(Error::KeypointCountMismatch { left: k.len(), right: self.config.num_keypoints as usize });
            }
            KeyPointSet::clamped(i as u32, k.points().iter().copied())
        };

        let mut ledger = RateLedger::default();
        let mut packets = Vec::new();
        let emit = |p: Packet, ledger: &mut RateLedger, packets: &mut Vec<Packet>| {
            ledger.record(&p);
            packets.push(p);
        };
        emit(encode_handshake(&self.config), &mut ledger, &mut packets);

        let first = first.clone().with_index(0);
        let kps0 = detect(0)?;
        let mut state = match &policy {
            Some((_, s)) => {
                let (pose, bg) = s.inputs(0, &first)?;
                let (st, pkt) = apply_replacement(&first, &kps0, pose, bg, &mut ledger)?;
                packets.push(pkt);
                Some(st)
            }
            None => {
                emit(encode_pivot(&first, &kps0)?, &mut ledger, &mut packets);
                None
            }
        };

        let mut replacements = Vec::new();
        for i in schedule.keyed_indices() {
            let idx = i as usize;
            let frame = frames[idx].clone().with_index(i);
            let kps = detect(idx)?;
            if let (Some((pol, sig)), Some(st)) = (&policy, state.as_mut()) {
                let (pose, bg) = sig.inputs(idx, &frame)?;
                if pol.decide(st, i, &pose, &bg) == Decision::Replace {
                    let (next, pkt) = apply_replacement(&frame, &kps, pose, bg, &mut ledger)?;
                    *st = next;
                    packets.push(pkt);
                    replacements.push(i);
                    continue;
                }
            }
            emit(encode_keypoints(&kps)?, &mut ledger, &mut packets);
        }
        emit(Packet::end_of_stream(n as u32), &mut ledger, &mut packets);
        Ok(EncodedStream { packets, ledger, schedule, replacements })
    }
}

#[derive(Clone, Debug)]
pub struct DecodedStream {
    pub config: StreamConfig,
    pub frames: Vec<Frame>,
    /// The schedule actually rendered, after loss handling.
    pub schedule: Schedule,
    pub pivot_indices: Vec<u32>,
    /// Keyed frames whose keypoints never arrived.
    pub missing_keyed: Vec<u32>,
}

impl DecodedStream {
    pub fn replacement_indices(&self) -> Vec<u32> {
        self.pivot_indices.iter().copied().filter(|&i| i != 0).collect()
    }
}

pub struct Decoder<'a> {
    pub warp: &'a dyn WarpBackend,
    pub interp: &'a dyn InterpBackend,
    pub sr: &'a dyn SrBackend,
    /// Overrides the handshake's upscale factor.
    pub sr_factor: Option<u8>,
    /// Overrides the handshake's patch size.
    pub patch: Option<usize>,
    /// Half-patch stride with blended seams.
    pub overlap: bool,
}

static REFERENCE_WARP: ReferenceWarp = ReferenceWarp { sigma: crate::warp::DEFAULT_SIGMA };
static REFERENCE_INTERP: ReferenceInterp = ReferenceInterp { warp: REFERENCE_WARP };
static REFERENCE_SR: UnsharpSr = UnsharpSr { amount: 0.5 };

impl Default for Decoder<'static> {
    fn default() -> Self {
        Self {
            warp: &REFERENCE_WARP,
            interp: &REFERENCE_INTERP,
            sr: &REFERENCE_SR,
            sr_factor: None,
            patch: None,
            overlap: false,
        }
    }
}

impl<'a> Decoder<'a> {
    pub fn with_sr(mut self, sr: &'a dyn SrBackend) -> Self {
        self.sr = sr;
        self
    }

    pub fn decode(&self, packets: &[Packet]) -> Result<DecodedStream> {
        let hs = packets.first().ok_or(Error::MissingHandshake)?;
        let config = decode_handshake(hs)?;
        validate_config(&config)?;
        let dims = (config.width as usize, config.height as usize);
        let nk = config.num_keypoints as usize;

        let mut pivots: BTreeMap<u32, (Frame, KeyPointSet)> = BTreeMap::new();
        let mut keypoints: BTreeMap<u32, KeyPointSet> = BTreeMap::new();
        let mut displayed = None;
        for p in &packets[1..] {
            match p.kind {
                PacketKind::Handshake => return Err(Error::Malformed("second handshake".into())),
                PacketKind::Pivot => {
                    let (f, k) = decode_pivot(p)?;
                    if f.dims() != dims {
                        return Err(Error::DimensionMismatch(f.dims(), dims));
                    }
                    if k.len() != nk {
                        return Err(Error::KeypointCountMismatch { left: k.len(), right: nk });
                    }
                    keypoints.insert(p.frame_index, k.clone());
                    pivots.insert(p.frame_index, (f, k));
                }
                PacketKind::KeyPoints => {
                    keypoints.insert(p.frame_index, decode_keypoints(p, nk)?);
                }
                PacketKind::EndOfStream => displayed = Some(p.frame_index as usize),
            }
        }
        let last_good = keypoints.keys().next_back().copied();
        let n = displayed.ok_or(Error::UnexpectedEof { last_good })?;
        if !pivots.contains_key(&0) {
            return Err(Error::Malformed("no pivot for frame 0".into()));
        }
        if let Some(&i) = keypoints.keys().find(|&&i| i as usize >= n) {
            return Err(Error::Malformed(format!("keypoints for frame {i} beyond {n} displayed frames")));
        }

        let planned = build_schedule(n, config.interp_frames)?;
        let missing_keyed: Vec<u32> = planned.keyed_indices().filter(|i| !keypoints.contains_key(i)).collect();
        let schedule = receiver_loss_policy(&planned, &missing_keyed);

        let pivot_at = |i: u32| -> PivotRef<'_> {
            let (_, (f, k)) = pivots.range(..=i).next_back().expect("frame 0 pivot checked above");
            PivotRef { frame: f, keypoints: k }
        };

        // Anchors first; interpolated frames need both neighbours.
        let mut recon: Vec<Option<Frame>> = schedule
            .tags
            .par_iter()
            .enumerate()
            .map(|(i, tag)| -> Result<Option<Frame>> {
                let i = i as u32;
                Ok(match tag {
                    FrameTag::PivotDirect => Some(pivots[&0].0.clone()),
                    FrameTag::Keyed(_) => {
                        let pv = pivot_at(i);
                        Some(self.warp.reconstruct(pv.frame, pv.keypoints, &keypoints[&i])?.with_index(i))
                    }
                    _ => None,
                })
            })
            .collect::<Result<_>>()?;

        let filled: Vec<(usize, Frame)> = schedule
            .tags
            .par_iter()
            .enumerate()
            .filter_map(|(i, tag)| match *tag {
                FrameTag::Interpolated { left, right, fraction } => Some((i, left, right, fraction)),
                _ => None,
            })
            .map(|(i, left, right, fraction)| {
                let l = recon[left as usize].as_ref().expect("anchor");
                let r = recon[right as usize].as_ref().expect("anchor");
                let f = self.interp.interpolate(
                    l,
                    r,
                    &keypoints[&left],
                    &keypoints[&right],
                    fraction,
                    pivot_at(left),
                    i as u32,
                )?;
                Ok((i, f.with_index(i as u32)))
            })
            .collect::<Result<_>>()?;
        for (i, f) in filled {
            recon[i] = Some(f);
        }
        for i in 0..n {
            if let FrameTag::Hold(src) = schedule.tags[i] {
                recon[i] = Some(recon[src as usize].clone().expect("earlier frame").with_index(i as u32));
            }
        }

        let factor = self.sr_factor.unwrap_or(config.sr_factor) as usize;
        let k = self.patch.unwrap_or(config.sr_patch as usize);
        let stride = if self.overlap { (k / 2).max(1) } else { k };
        let frames = recon
            .into_par_iter()
            .map(|f| super_resolve(&f.expect("every tag rendered"), factor, k, stride, self.sr))
            .collect::<Result<Vec<_>>>()?;

        Ok(DecodedStream {
            config,
            frames,
            schedule,
            pivot_indices: pivots.keys().copied().collect(),
            missing_keyed,
        })
    }
}
