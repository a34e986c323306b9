use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thc::channel::{ChannelConfig, ChannelMode};
use thc::harness::{self, DecodeOptions, SessionManifest, SrChoice};
use thc::synthetic::ClipKind;

#[derive(Parser)]
#[command(name = "thc", version, about = "Keypoint talking-head codec")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode a PNG directory (or .y4m) into a .thc stream plus ledger sidecar.
    Encode {
        /// Key-value manifest; flags override its entries.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Keypoint sidecar: `index x0 y0 … x9 y9` per line.
        #[arg(long)]
        keypoints: Option<PathBuf>,
        #[arg(long)]
        interp: Option<u8>,
        #[arg(long)]
        kp: Option<u8>,
        /// Enables the adaptive pivot policy.
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        dbg: Option<f64>,
        #[arg(long)]
        cooldown: Option<u32>,
        /// Enable the pivot policy even without --pose (it will then fail).
        #[arg(long)]
        policy: bool,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Decode a .thc stream into a PNG directory.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        sr: Option<u8>,
        #[arg(long)]
        patch: Option<usize>,
        /// Half-patch stride with blended seams.
        #[arg(long)]
        overlap: bool,
        #[arg(long, default_value = "unsharp")]
        backend: String,
    },
    /// Push a stream through the simulated channel.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        loss: f64,
        /// Bits per second; unlimited when omitted.
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Milliseconds.
        #[arg(long, default_value_t = 0.0)]
        latency: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score decoded frames against references.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Channel report from `simulate`, embedded in the evaluation.
        #[arg(long)]
        channel: Option<PathBuf>,
    },
    /// Run a sweep spec; writes CSV and JSON.
    Ablate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Write a synthetic clip with its keypoint, pose and mask sidecars.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "linear")]
        kind: String,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
    },
}

fn run(cmd: Cmd) -> thc::Result<()> {
    match cmd {
        Cmd::Encode {
            manifest,
            input,
            output,
            keypoints,
            interp,
            kp,
            pose,
            masks,
            gamma,
            dbg,
            cooldown,
            policy,
            ledger,
        } => {
            let mut m = match manifest {
                Some(p) => SessionManifest::from_file(&p)?,
                None => SessionManifest::default(),
            };
            m.input = input.or(m.input);
            m.output = output.or(m.output);
            m.keypoints = keypoints.or(m.keypoints);
            m.ledger = ledger.or(m.ledger);
            m.stream.interp_frames = interp.unwrap_or(m.stream.interp_frames);
            m.stream.num_keypoints = kp.unwrap_or(m.stream.num_keypoints);
            let th = &mut m.stream.pivot_policy;
            if let Some(g) = gamma {
                (th.gamma_yaw, th.gamma_roll, th.gamma_pitch) = (g, g, g);
            }
            th.d_bg = dbg.unwrap_or(th.d_bg);
            m.policy |= policy || pose.is_some() || gamma.is_some() || dbg.is_some();
            m.pose = pose.or(m.pose);
            m.masks = masks.or(m.masks);
            m.cooldown = cooldown.or(m.cooldown);
            let enc = harness::cmd_encode(&m)?;
            println!(
                "{} packets, {} frames, {} pivot replacements, {} bits",
                enc.packets.len(),
                enc.ledger.displayed_frames,
                enc.replacements.len(),
                enc.ledger.total_bits()
            );
        }
        Cmd::Decode { input, output, sr, patch, overlap, backend } => {
            let opts = DecodeOptions { sr, patch, overlap, backend: backend.parse::<SrChoice>()? };
            let d = harness::cmd_decode(&input, &output, &opts)?;
            println!("{} frames, {} keyed frames missing", d.frames.len(), d.missing_keyed.len());
        }
        Cmd::Simulate { input, output, loss, bandwidth, latency, seed, report } => {
            let mode = if loss > 0.0 { ChannelMode::Lossy } else { ChannelMode::ReliableOrdered };
            let cfg = ChannelConfig { mode, loss_rate: loss, seed, bandwidth_bits_per_s: bandwidth, latency_ms: latency };
            let r = harness::cmd_simulate(&input, &output, &cfg, report.as_deref())?;
            println!(
                "{} delivered, {} dropped, {:.4} s simulated",
                r.delivered(),
                r.dropped(),
                r.simulated_time_s
            );
        }
        Cmd::Evaluate { reference, out, ledger, report, channel } => {
            let r = harness::cmd_evaluate(&reference, &out, &ledger, &report, channel.as_deref())?;
            println!(
                "PSNR {:.2} dB  SSIM {:.4}  bpp {:.6} (full {:.6})",
                r.mean_psnr, r.mean_ssim, r.bpp_paper, r.bpp_full
            );
        }
        Cmd::Ablate { spec } => {
            for r in harness::cmd_ablate(&spec)? {
                println!(
                    "m={} k={} gamma={} d_bg={} bpp={:.6} full={:.6} replacements={}",
                    r.m, r.k, r.gamma, r.d_bg, r.bpp_paper, r.bpp_full, r.replacements
                );
            }
        }
        Cmd::Synth { output, kind, frames, width, height } => {
            harness::cmd_synth(&output, kind.parse::<ClipKind>()?, frames, width, height)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
