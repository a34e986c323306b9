//! Simulated transmission channel between an encoder and a decoder.
//!
//! Timing is computed, not waited for. Only keypoint packets can be lost;
//! handshake, pivot and end-of-stream packets travel on a reliable
//! sub-channel.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitstream::{Packet, PacketKind};
use crate::error::{Error, Result};
use crate::interp::{FrameTag, Schedule};
use crate::model::Fraction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelMode {
    ReliableOrdered,
    Lossy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub loss_rate: f64,
    pub seed: u64,
    pub bandwidth_bits_per_s: Option<f64>,
    pub latency_ms: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            mode: ChannelMode::ReliableOrdered,
            loss_rate: 0.0,
            seed: 0,
            bandwidth_bits_per_s: None,
            latency_ms: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn lossy(loss_rate: f64, seed: u64) -> Self {
        Self { mode: ChannelMode::Lossy, loss_rate, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0..1.0).contains(&self.loss_rate) {
            errs.push(format!("loss rate {} outside [0, 1)", self.loss_rate));
        }
        if let Some(b) = self.bandwidth_bits_per_s {
            if !(b.is_finite() && b > 0.0) {
                errs.push(format!("bandwidth {b} must be positive"));
            }
        }
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            errs.push(format!("latency {} must be non-negative", self.latency_ms));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub handshake: ClassCounts,
    pub pivot: ClassCounts,
    pub keypoints: ClassCounts,
    pub end_of_stream: ClassCounts,
    /// Bits put on the wire, lost packets included.
    pub total_bits: u64,
    pub simulated_time_s: f64,
    pub dropped_frame_indices: Vec<u32>,
}

impl ChannelReport {
    fn class(&mut self, kind: PacketKind) -> &mut ClassCounts {
        match kind {
            PacketKind::Handshake => &mut self.handshake,
            PacketKind::Pivot => &mut self.pivot,
            PacketKind::KeyPoints => &mut self.keypoints,
            PacketKind::EndOfStream => &mut self.end_of_stream,
        }
    }

    pub fn delivered(&self) -> u64 {
        self.handshake.delivered + self.pivot.delivered + self.keypoints.delivered + self.end_of_stream.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.keypoints.dropped
    }
}

/// Pushes `packets` through the channel. Deterministic for a given seed.
pub fn transmit(packets: &[Packet], cfg: &ChannelConfig) -> Result<(Vec<Packet>, ChannelReport)> {
    cfg.validate()?;
    match packets.first() {
        Some(p) if p.kind == PacketKind::Handshake => {}
        _ => return Err(Error::MissingHandshake),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = ChannelReport::default();
    let mut delivered = Vec::with_capacity(packets.len());
    for p in packets {
        report.total_bits += p.wire_bytes() as u64 * 8;
        let lost = cfg.mode == ChannelMode::Lossy
            && p.kind == PacketKind::KeyPoints
            && rng.gen::<f64>() < cfg.loss_rate;
        let counts = report.class(p.kind);
        counts.sent += 1;
        if lost {
            counts.dropped += 1;
            report.dropped_frame_indices.push(p.frame_index);
        } else {
            counts.delivered += 1;
            delivered.push(p.clone());
        }
    }
    let transfer = cfg.bandwidth_bits_per_s.map_or(0.0, |b| report.total_bits as f64 / b);
    report.simulated_time_s = transfer + cfg.latency_ms / 1000.0;
    Ok((delivered, report))
}

/// Re-tags a schedule after keyed frames went missing. Frames between the
/// surviving anchors are interpolated across the widened span; frames with
/// no surviving anchor to their right hold the last anchor.
pub fn receiver_loss_policy(schedule: &Schedule, dropped_keyed: &[u32]) -> Schedule {
    let dropped: BTreeSet<u32> = dropped_keyed.iter().copied().collect();
    let is_anchor = |i: usize, t: &FrameTag| match t {
        FrameTag::PivotDirect => true,
        FrameTag::Keyed(_) => !dropped.contains(&(i as u32)),
        _ => false,
    };
    let anchors: Vec<u32> = schedule
        .tags
        .iter()
        .enumerate()
        .filter(|(i, t)| is_anchor(*i, t))
        .map(|(i, _)| i as u32)
        .collect();
    let tags = schedule
        .tags
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if is_anchor(i, t) {
                return *t;
            }
            let i = i as u32;
            let pos = anchors.partition_point(|&a| a < i);
            let left = anchors[pos - 1];
            match anchors.get(pos) {
                Some(&right) => FrameTag::Interpolated {
                    left,
                    right,
                    fraction: Fraction { num: i - left, den: right - left },
                },
                None => FrameTag::Hold(left),
            }
        })
        .collect();
    Schedule { tags }
}
