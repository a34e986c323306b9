//! The whole session through files, as the command-line tool runs it:
//! synth -> encode -> simulate -> decode -> evaluate.

use thc::channel::ChannelConfig;
use thc::harness::{self, DecodeOptions, SessionManifest};
use thc::synthetic::ClipKind;

fn main() -> thc::Result<()> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("thc-demo"));
    harness::cmd_synth(&dir.join("clip"), ClipKind::Nonlinear, 50, 128, 128)?;

    let manifest = SessionManifest::parse(
        "input = clip/frames\nkeypoints = clip/keypoints.txt\noutput = clip.thc\ninterp_frames = 1\n",
        &dir,
    )?;
    let enc = harness::cmd_encode(&manifest)?;
    println!("encoded {} packets, {} bits", enc.packets.len(), enc.ledger.total_bits());

    let stream = dir.join("clip.thc");
    let received = dir.join("received.thc");
    let ch = harness::cmd_simulate(&stream, &received, &ChannelConfig::lossy(0.1, 1), Some(&dir.join("channel.json")))?;
    println!("channel dropped {} keypoint packets", ch.dropped());

    let dec = harness::cmd_decode(&received, &dir.join("decoded"), &DecodeOptions::default())?;
    println!("decoded {} frames at {}x{}", dec.frames.len(), dec.frames[0].width(), dec.frames[0].height());

    let rep = harness::cmd_evaluate(
        &dir.join("clip/frames"),
        &dir.join("decoded"),
        &harness::ledger_path(&stream),
        &dir.join("report.json"),
        Some(&dir.join("channel.json")),
    )?;
    println!(
        "PSNR {:.2} dB, SSIM {:.4}, bpp {:.6} (full {:.5}); report in {}",
        rep.mean_psnr,
        rep.mean_ssim,
        rep.bpp_paper,
        rep.bpp_full,
        dir.join("report.json").display()
    );
    Ok(())
}
