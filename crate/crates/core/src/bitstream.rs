//! Wire format of a compressed stream and the rate ledger behind BPP.
//!
//! A `.thc` file is the magic `THC1` followed by packets. Every packet starts
//! with a one-byte kind and a little-endian `u32` frame index; the rest
//! depends on the kind:
//!
//! | kind | code | after the common header |
//! |------|------|-------------------------|
//! | Handshake   | `0x00` | 15-byte config: width u32, height u32, keypoints u8, interp u8, sr u8, patch u16, fps u16 |
//! | Pivot       | `0x01` | payload length u32, then a PNG image followed by the pivot keypoints (count u8 + 8 bytes each) |
//! | KeyPoints   | `0x02` | count u8, then `count` × (x f32, y f32) |
//! | EndOfStream | `0x03` | nothing; the frame index carries the displayed-frame count |
//!
//! All multi-byte integers and floats are little-endian.

use std::io::{Read, Write};

use image::ImageEncoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Frame, KeyPoint, KeyPointSet, PivotThresholds, StreamConfig};

pub const MAGIC: &[u8; 4] = b"THC1";
pub const KEYPOINT_BYTES: usize = 8;
/// x, y and a 2×2 Jacobian, all f32: the layout used by the original
/// first-order motion model.
pub const JACOBIAN_KEYPOINT_BYTES: usize = 24;
pub const HANDSHAKE_PAYLOAD_BYTES: usize = 15;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum PacketKind {
    Handshake = 0x00,
    Pivot = 0x01,
    KeyPoints = 0x02,
    EndOfStream = 0x03,
}

impl TryFrom<u8> for PacketKind {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            0x00 => PacketKind::Handshake,
            0x01 => PacketKind::Pivot,
            0x02 => PacketKind::KeyPoints,
            0x03 => PacketKind::EndOfStream,
            other => return Err(Error::UnknownPacketKind(other)),
        })
    }
}

impl PacketKind {
    /// Bytes on the wire before the payload.
    pub fn header_bytes(self) -> usize {
        match self {
            PacketKind::Handshake | PacketKind::EndOfStream => 5,
            PacketKind::Pivot => 9,
            PacketKind::KeyPoints => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub kind: PacketKind,
    pub frame_index: u32,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn wire_bytes(&self) -> usize {
        self.kind.header_bytes() + self.payload.len()
    }

    pub fn end_of_stream(displayed_frames: u32) -> Self {
        Packet { kind: PacketKind::EndOfStream, frame_index: displayed_frames, payload: Vec::new() }
    }
}

/// Running byte accounting for one session, split by packet class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLedger {
    pub keypoint_payload_bits: u64,
    pub pivot_payload_bits: u64,
    /// Packet headers plus the handshake body.
    pub header_bits: u64,
    pub displayed_frames: u64,
}

impl RateLedger {
    pub fn record(&mut self, pkt: &Packet) {
        let payload_bits = pkt.payload.len() as u64 * 8;
        self.header_bits += pkt.kind.header_bytes() as u64 * 8;
        match pkt.kind {
            PacketKind::KeyPoints => self.keypoint_payload_bits += payload_bits,
            PacketKind::Pivot => self.pivot_payload_bits += payload_bits,
            PacketKind::Handshake => self.header_bits += payload_bits,
            PacketKind::EndOfStream => {
                self.displayed_frames = self.displayed_frames.max(pkt.frame_index as u64)
            }
        }
    }

    pub fn from_packets<'a>(packets: impl IntoIterator<Item = &'a Packet>) -> Self {
        let mut ledger = Self::default();
        for p in packets {
            ledger.record(p);
        }
        ledger
    }

    pub fn total_bits(&self) -> u64 {
        self.keypoint_payload_bits + self.pivot_payload_bits + self.header_bits
    }
}

fn keypoint_bytes(kps: &KeyPointSet, out: &mut Vec<u8>) {
    for p in kps.points() {
        out.extend_from_slice(&p.x.to_le_bytes());
        out.extend_from_slice(&p.y.to_le_bytes());
    }
}

fn parse_keypoints(bytes: &[u8], frame_index: u32) -> Result<KeyPointSet> {
    let points = bytes
        .chunks_exact(KEYPOINT_BYTES)
        .map(|c| {
            KeyPoint::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            )
        })
        .collect();
    KeyPointSet::new(frame_index, points)
}

/// Packs a keypoint set as two little-endian f32 per point.
pub fn encode_keypoints(kps: &KeyPointSet) -> Result<Packet> {
    if kps.is_empty() {
        return Err(Error::InvalidKeypoints("empty keypoint set".into()));
    }
    let mut payload = Vec::with_capacity(kps.len() * KEYPOINT_BYTES);
    keypoint_bytes(kps, &mut payload);
    Ok(Packet { kind: PacketKind::KeyPoints, frame_index: kps.frame_index, payload })
}

pub fn decode_keypoints(pkt: &Packet, num_keypoints: usize) -> Result<KeyPointSet> {
    if pkt.kind != PacketKind::KeyPoints {
        return Err(Error::Malformed(format!("expected KeyPoints packet, got {:?}", pkt.kind)));
    }
    let expected = num_keypoints * KEYPOINT_BYTES;
    if pkt.payload.len() != expected {
        return Err(Error::TruncatedKeypoints { expected, actual: pkt.payload.len() });
    }
    parse_keypoints(&pkt.payload, pkt.frame_index)
}

/// The comparison layout that also carries a 2×2 Jacobian per keypoint.
pub fn encode_keypoints_with_jacobians(
    kps: &KeyPointSet,
    jacobians: &[[f32; 4]],
) -> Result<Vec<u8>> {
    if kps.is_empty() {
        return Err(Error::InvalidKeypoints("empty keypoint set".into()));
    }
    if jacobians.len() != kps.len() {
        return Err(Error::KeypointCountMismatch { left: kps.len(), right: jacobians.len() });
    }
    let mut out = Vec::with_capacity(kps.len() * JACOBIAN_KEYPOINT_BYTES);
    for (p, j) in kps.points().iter().zip(jacobians) {
        out.extend_from_slice(&p.x.to_le_bytes());
        out.extend_from_slice(&p.y.to_le_bytes());
        for v in j {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Encodes a pivot frame as lossless PNG followed by its keypoints, which the
/// receiver needs as the warp source positions.
pub fn encode_pivot(frame: &Frame, kps: &KeyPointSet) -> Result<Packet> {
    let mut payload = Vec::new();
    image::codecs::png::PngEncoder::new(&mut payload)
        .write_image(
            frame.pixels(),
            frame.width() as u32,
            frame.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::PivotEncode(e.to_string()))?;
    payload.push(kps.len() as u8);
    keypoint_bytes(kps, &mut payload);
    Ok(Packet { kind: PacketKind::Pivot, frame_index: frame.index(), payload })
}

/// Length of the PNG datastream at the start of `bytes`, found by walking
/// chunks up to and including `IEND`.
fn png_len(bytes: &[u8]) -> Result<usize> {
    let bad = |m: &str| Error::PivotDecode(m.to_string());
    if bytes.len() < 8 || bytes[..8] != PNG_SIGNATURE {
        return Err(bad("missing PNG signature"));
    }
    let mut pos = 8;
    loop {
        let head = bytes.get(pos..pos + 8).ok_or_else(|| bad("truncated PNG chunk"))?;
        let len = u32::from_be_bytes(head[0..4].try_into().unwrap()) as usize;
        let end = pos + 12 + len;
        if end > bytes.len() {
            return Err(bad("truncated PNG chunk"));
        }
        if &head[4..8] == b"IEND" {
            return Ok(end);
        }
        pos = end;
    }
}

pub fn decode_pivot(pkt: &Packet) -> Result<(Frame, KeyPointSet)> {
    if pkt.kind != PacketKind::Pivot {
        return Err(Error::Malformed(format!("expected Pivot packet, got {:?}", pkt.kind)));
    }
    let split = png_len(&pkt.payload)?;
    let img = image::load_from_memory_with_format(&pkt.payload[..split], image::ImageFormat::Png)
        .map_err(|e| Error::PivotDecode(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let frame = Frame::new(w as usize, h as usize, img.into_raw(), pkt.frame_index)?;

    let rest = &pkt.payload[split..];
    let count = *rest.first().ok_or(Error::TruncatedKeypoints { expected: 1, actual: 0 })? as usize;
    let body = &rest[1..];
    if body.len() != count * KEYPOINT_BYTES {
        return Err(Error::TruncatedKeypoints { expected: count * KEYPOINT_BYTES, actual: body.len() });
    }
    Ok((frame, parse_keypoints(body, pkt.frame_index)?))
}

pub fn encode_handshake(cfg: &StreamConfig) -> Packet {
    let mut p = Vec::with_capacity(HANDSHAKE_PAYLOAD_BYTES);
    p.extend_from_slice(&cfg.width.to_le_bytes());
    p.extend_from_slice(&cfg.height.to_le_bytes());
    p.push(cfg.num_keypoints);
    p.push(cfg.interp_frames);
    p.push(cfg.sr_factor);
    p.extend_from_slice(&cfg.sr_patch.to_le_bytes());
    p.extend_from_slice(&cfg.fps.to_le_bytes());
    Packet { kind: PacketKind::Handshake, frame_index: 0, payload: p }
}

/// Recovers the stream configuration. Pivot thresholds are sender-only and
/// come back as defaults.
pub fn decode_handshake(pkt: &Packet) -> Result<StreamConfig> {
    if pkt.kind != PacketKind::Handshake {
        return Err(Error::MissingHandshake);
    }
    let p = &pkt.payload;
    if p.len() != HANDSHAKE_PAYLOAD_BYTES {
        return Err(Error::Malformed(format!("handshake payload of {} bytes", p.len())));
    }
    Ok(StreamConfig {
        width: u32::from_le_bytes(p[0..4].try_into().unwrap()),
        height: u32::from_le_bytes(p[4..8].try_into().unwrap()),
        num_keypoints: p[8],
        interp_frames: p[9],
        sr_factor: p[10],
        sr_patch: u16::from_le_bytes(p[11..13].try_into().unwrap()),
        fps: u16::from_le_bytes(p[13..15].try_into().unwrap()),
        pivot_policy: PivotThresholds::default(),
    })
}

fn write_packet<W: Write>(pkt: &Packet, w: &mut W) -> Result<()> {
    w.write_all(&[pkt.kind as u8])?;
    w.write_all(&pkt.frame_index.to_le_bytes())?;
    match pkt.kind {
        PacketKind::Handshake => {
            if pkt.payload.len() != HANDSHAKE_PAYLOAD_BYTES {
                return Err(Error::Malformed("handshake payload must be 15 bytes".into()));
            }
        }
        PacketKind::Pivot => {
            let len = u32::try_from(pkt.payload.len())
                .map_err(|_| Error::Malformed("pivot payload exceeds 4 GiB".into()))?;
            w.write_all(&len.to_le_bytes())?;
        }
        PacketKind::KeyPoints => {
            let n = pkt.payload.len() / KEYPOINT_BYTES;
            if pkt.payload.len() % KEYPOINT_BYTES != 0 || n == 0 || n > u8::MAX as usize {
                return Err(Error::Malformed(format!(
                    "keypoint payload of {} bytes",
                    pkt.payload.len()
                )));
            }
            w.write_all(&[n as u8])?;
        }
        PacketKind::EndOfStream => {
            if !pkt.payload.is_empty() {
                return Err(Error::Malformed("end-of-stream carries no payload".into()));
            }
        }
    }
    w.write_all(&pkt.payload)?;
    Ok(())
}

/// Serializes a full stream, magic included. The first packet must be a
/// handshake.
pub fn write_stream<W: Write>(packets: &[Packet], mut sink: W) -> Result<()> {
    match packets.first() {
        Some(p) if p.kind == PacketKind::Handshake => {}
        _ => return Err(Error::MissingHandshake),
    }
    sink.write_all(MAGIC)?;
    for p in packets {
        write_packet(p, &mut sink)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn stream_to_bytes(packets: &[Packet]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_stream(packets, &mut out)?;
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    last_good: Option<u32>,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::UnexpectedEof { last_good: self.last_good }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a stream up to and including its end-of-stream packet.
pub fn read_stream<R: Read>(mut source: R) -> Result<Vec<Packet>> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    parse_stream(&buf)
}

pub fn parse_stream(buf: &[u8]) -> Result<Vec<Packet>> {
    let mut cur = Cursor { buf, pos: 0, last_good: None };
    if cur.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut packets = Vec::new();
    loop {
        if cur.pos == buf.len() {
            return Err(Error::UnexpectedEof { last_good: cur.last_good });
        }
        let kind = PacketKind::try_from(cur.take(1)?[0])?;
        if packets.is_empty() && kind != PacketKind::Handshake {
            return Err(Error::MissingHandshake);
        }
        let frame_index = cur.u32()?;
        let payload = match kind {
            PacketKind::Handshake => cur.take(HANDSHAKE_PAYLOAD_BYTES)?.to_vec(),
            PacketKind::Pivot => {
                let len = cur.u32()? as usize;
                cur.take(len)?.to_vec()
            }
            PacketKind::KeyPoints => {
                let n = cur.take(1)?[0] as usize;
                cur.take(n * KEYPOINT_BYTES)?.to_vec()
            }
            PacketKind::EndOfStream => Vec::new(),
        };
        packets.push(Packet { kind, frame_index, payload });
        if matches!(kind, PacketKind::Pivot | PacketKind::KeyPoints) {
            cur.last_good = Some(frame_index);
        }
        if kind == PacketKind::EndOfStream {
            if cur.pos != buf.len() {
                return Err(Error::Malformed(format!(
                    "{} trailing bytes after end of stream",
                    buf.len() - cur.pos
                )));
            }
            return Ok(packets);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kps(n: usize, frame_index: u32) -> KeyPointSet {
        let pts = (0..n).map(|i| KeyPoint::new(i as f32 * 0.1 - 0.5, 0.25 - i as f32 * 0.05));
        KeyPointSet::new(frame_index, pts.collect()).unwrap()
    }

    #[test]
    fn ten_keypoints_make_eighty_bytes() {
        let p = encode_keypoints(&kps(10, 3)).unwrap();
        assert_eq!(p.payload.len(), 80);
        assert_eq!(p.wire_bytes(), 86);
        let mut ledger = RateLedger::default();
        ledger.record(&p);
        assert_eq!(ledger.keypoint_payload_bits, 640);
        assert_eq!(ledger.header_bits, 48);
    }

    #[test]
    fn jacobian_layout_is_240_bytes() {
        let payload = encode_keypoints_with_jacobians(&kps(10, 0), &[[1.0, 0.0, 0.0, 1.0]; 10]).unwrap();
        assert_eq!(payload.len(), 240);
    }

    #[test]
    fn empty_set_is_rejected() {
        // The only way to get an empty set past construction is not to have one.
        assert!(KeyPointSet::new(0, vec![]).is_err());
        assert!(encode_keypoints_with_jacobians(&kps(1, 0), &[]).is_err());
    }

    #[test]
    fn keypoint_roundtrip_and_errors() {
        let k = kps(10, 7);
        let p = encode_keypoints(&k).unwrap();
        assert_eq!(decode_keypoints(&p, 10).unwrap(), k);

        let mut short = p.clone();
        short.payload.pop();
        assert!(matches!(
            decode_keypoints(&short, 10),
            Err(Error::TruncatedKeypoints { expected: 80, actual: 79 })
        ));

        let mut wild = p.clone();
        wild.payload[0..4].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(decode_keypoints(&wild, 10), Err(Error::CoordinateOutOfRange(_))));
    }

    #[test]
    fn pivot_is_lossless() {
        let f = Frame::filled(256, 256, [12, 200, 99], 0).unwrap();
        let k = kps(10, 0);
        let p = encode_pivot(&f, &k).unwrap();
        let (g, k2) = decode_pivot(&p).unwrap();
        assert_eq!(f, g);
        assert_eq!(k, k2);

        let busy = Frame::from_fn(37, 21, 5, |x, y| [(x * 7) as u8, (y * 13) as u8, (x ^ y) as u8])
            .unwrap();
        let (g, _) = decode_pivot(&encode_pivot(&busy, &k.with_index(5)).unwrap()).unwrap();
        assert_eq!(busy, g);
    }

    fn sample_stream() -> Vec<Packet> {
        let cfg = StreamConfig::default();
        let base = Frame::filled(32, 32, [1, 2, 3], 0).unwrap();
        let mut v = vec![encode_handshake(&cfg), encode_pivot(&base, &kps(10, 0)).unwrap()];
        for i in 1..=5 {
            v.push(encode_keypoints(&kps(10, i)).unwrap());
        }
        v.push(Packet::end_of_stream(6));
        v
    }

    #[test]
    fn stream_roundtrip() {
        let s = sample_stream();
        let bytes = stream_to_bytes(&s).unwrap();
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(read_stream(&bytes[..]).unwrap(), s);
        assert_eq!(decode_handshake(&s[0]).unwrap(), StreamConfig::default());
    }

    #[test]
    fn stream_must_start_with_handshake() {
        let s = sample_stream();
        assert!(matches!(stream_to_bytes(&s[2..]), Err(Error::MissingHandshake)));
        let mut bytes = MAGIC.to_vec();
        write_packet(&s[2], &mut bytes).unwrap();
        assert!(matches!(parse_stream(&bytes), Err(Error::MissingHandshake)));
    }

    #[test]
    fn unknown_kind_rejected() {
        let mut bytes = stream_to_bytes(&sample_stream()).unwrap();
        bytes[4] = 0x7f;
        assert!(matches!(parse_stream(&bytes), Err(Error::UnknownPacketKind(0x7f))));
    }

    #[test]
    fn truncation_reports_last_good_frame() {
        let bytes = stream_to_bytes(&sample_stream()).unwrap();
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(parse_stream(cut), Err(Error::UnexpectedEof { last_good: Some(4) })));
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(parse_stream(cut), Err(Error::UnexpectedEof { last_good: Some(5) })));
    }

    #[test]
    fn ledger_is_additive() {
        let s = sample_stream();
        let whole = RateLedger::from_packets(&s);
        let (a, b) = s.split_at(3);
        let mut parts = RateLedger::from_packets(a);
        for p in b {
            parts.record(p);
        }
        assert_eq!(whole, parts);
        assert_eq!(whole.keypoint_payload_bits, 5 * 640);
        assert_eq!(whole.displayed_frames, 6);
        let wire: usize = s.iter().map(Packet::wire_bytes).sum();
        assert_eq!(whole.total_bits(), wire as u64 * 8);
    }

    proptest! {
        #[test]
        fn keypoint_payload_roundtrip(
            idx in any::<u32>(),
            pts in prop::collection::vec((-1.0f32..=1.0, -1.0f32..=1.0), 1..40),
        ) {
            let k = KeyPointSet::new(idx, pts.iter().map(|&(x, y)| KeyPoint::new(x, y)).collect()).unwrap();
            let p = encode_keypoints(&k).unwrap();
            prop_assert_eq!(p.payload.len(), k.len() * 8);
            let back = decode_keypoints(&p, k.len()).unwrap();
            for (a, b) in k.points().iter().zip(back.points()) {
                prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
                prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
            }
        }
    }
}
