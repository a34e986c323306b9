//! Keypoint packets lost in transit: the receiver widens interpolation spans
//! and still shows every frame.

use thc::channel::{transmit, ChannelConfig};
use thc::harness::{decode_packets, DecodeOptions, SrChoice};
use thc::metrics::evaluate;
use thc::pipeline::{Encoder, SidecarKeypoints};
use thc::{synthetic, StreamConfig};

fn main() -> thc::Result<()> {
    let n = 60;
    let clip = synthetic::clip(synthetic::ClipKind::Nonlinear, n, 96, 96)?;
    let cfg = StreamConfig { width: 96, height: 96, interp_frames: 1, sr_factor: 1, ..Default::default() };
    let enc = Encoder::new(cfg).encode(&clip.frames, &SidecarKeypoints::new(clip.keypoints.clone()), None)?;

    for loss in [0.0, 0.1, 0.3, 0.5] {
        let ch = ChannelConfig { bandwidth_bits_per_s: Some(64_000.0), latency_ms: 40.0, ..ChannelConfig::lossy(loss, 7) };
        let (delivered, report) = transmit(&enc.packets, &ch)?;
        let dec = decode_packets(&delivered, &DecodeOptions { backend: SrChoice::Identity, ..Default::default() })?;
        let score = evaluate(&clip.frames, &dec.frames, &enc.ledger, vec![], Some(report.clone()))?;
        println!(
            "loss {loss:.1}: {:2} keyed lost, {} frames shown, PSNR {:5.2} dB, {:.3} s on a 64 kbit/s link",
            report.dropped(),
            dec.frames.len(),
            score.mean_psnr,
            report.simulated_time_s
        );
    }
    Ok(())
}
