//! Acceptance criteria, one line each. Runs as a plain binary so the
//! verdicts show up in `cargo test` output.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thc::bitstream::{
    encode_handshake, encode_keypoints, encode_keypoints_with_jacobians, encode_pivot, parse_stream, stream_to_bytes,
    Packet,
};
use thc::channel::{transmit, ChannelConfig};
use thc::harness::{run_ablation, AblationRow, AblationSpec, DecodeOptions, SrChoice};
use thc::interp::{build_schedule, FrameTag};
use thc::metrics::{evaluate, psnr, ssim};
use thc::model::{Frame, KeyPoint, KeyPointSet, StreamConfig};
use thc::pipeline::{Decoder, Encoder, SidecarKeypoints};
use thc::sr::{enhance_image, IdentitySr};
use thc::synthetic;
use thc::warp::{dense_flow, kernel_weights, synthesize_sequence, ReferenceWarp, WarpBackend, DEFAULT_SIGMA};

struct Verdict {
    pass: bool,
    detail: String,
    /// A stated target the implementation cannot meet without bending the
    /// definition; reported, but it does not fail the run.
    known_gap: Option<String>,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into(), known_gap: None }
}

fn ablate(text: &str) -> Vec<AblationRow> {
    run_ablation(&AblationSpec::parse(text, Path::new(".")).unwrap()).unwrap()
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn c1_bpp_by_interp_depth() -> Verdict {
    let t = Instant::now();
    let rows = ablate("clip = linear\nframes = 300\nwidth = 256\nheight = 256\nsr = 2\nm = 0,1,2,3\n");
    let secs = t.elapsed().as_secs_f64();
    let targets = [0.0024, 0.0012, 0.0008, 0.0006];
    let ok = rows.len() == 4
        && rows.iter().all(|r| (r.output_width, r.output_height) == (512, 512))
        && rows.iter().zip(targets).all(|(r, t)| within(r.bpp_paper, t, 1e-4))
        && secs < 60.0;
    let bpps: Vec<String> = rows.iter().map(|r| format!("{:.6}", r.bpp_paper)).collect();
    verdict(ok, format!("bpp m=0..3 [{}] at 512x512, {:.1} s with decoding and scoring", bpps.join(", "), secs))
}

fn c2_bpp_configurations() -> Verdict {
    let rate = |extra: &str| ablate(&format!("frames = 300\nwidth = 256\nheight = 256\nquality = off\n{extra}"));
    let kp_only = rate("sr = 1\nm = 0")[0].bpp_paper;
    let kp_interp = rate("sr = 1\nm = 1")[0].bpp_paper;
    let kp_interp_sr = rate("sr = 2\nm = 1")[0].bpp_paper;
    let ok = (0.0097..=0.0098).contains(&kp_only)
        && (0.0048..=0.0049).contains(&kp_interp)
        && within(kp_interp_sr, 0.0012, 1e-4);
    verdict(
        ok,
        format!("keypoints {kp_only:.6}, +interpolation {kp_interp:.6}, +2x SR {kp_interp_sr:.6} (512x512)"),
    )
}

fn c3_payload_bytes() -> Verdict {
    let kps = synthetic::base_keypoints();
    let compact = encode_keypoints(&kps).unwrap().payload.len();
    let with_jac = encode_keypoints_with_jacobians(&kps, &[[1.0, 0.0, 0.0, 1.0]; 10]).unwrap().len();
    verdict(compact == 80 && with_jac == 240, format!("{compact} bytes per frame vs {with_jac} with Jacobians"))
}

fn random_kps(rng: &mut ChaCha8Rng, n: usize, idx: u32) -> KeyPointSet {
    KeyPointSet::new(idx, (0..n).map(|_| KeyPoint::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect())
        .unwrap()
}

fn random_stream(rng: &mut ChaCha8Rng) -> Vec<Packet> {
    let nk = rng.gen_range(1..=16usize);
    let cfg = StreamConfig {
        width: rng.gen_range(16..=4096),
        height: rng.gen_range(16..=4096),
        num_keypoints: nk as u8,
        interp_frames: rng.gen_range(0..=3),
        sr_factor: rng.gen_range(1..=2),
        sr_patch: rng.gen_range(8..=512),
        fps: rng.gen_range(1..=120),
        ..Default::default()
    };
    let mut out = vec![encode_handshake(&cfg)];
    let mut idx = 0u32;
    for _ in 0..rng.gen_range(0..12) {
        if rng.gen_bool(0.15) {
            let (w, h) = (rng.gen_range(16..=24), rng.gen_range(16..=24));
            let px: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
            let f = Frame::new(w, h, px, idx).unwrap();
            out.push(encode_pivot(&f, &random_kps(rng, nk, idx)).unwrap());
        } else {
            out.push(encode_keypoints(&random_kps(rng, nk, idx)).unwrap());
        }
        idx += rng.gen_range(1..4);
    }
    out.push(Packet::end_of_stream(idx));
    out
}

fn c4_stream_roundtrip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7463);
    let mut bad = 0;
    let mut kinds = [0usize; 4];
    for _ in 0..1000 {
        let s = random_stream(&mut rng);
        for p in &s {
            kinds[p.kind as usize] += 1;
        }
        let bytes = stream_to_bytes(&s).unwrap();
        match parse_stream(&bytes) {
            Ok(back) if back == s && stream_to_bytes(&back).unwrap() == bytes => {}
            _ => bad += 1,
        }
    }
    verdict(
        bad == 0,
        format!(
            "1000 random sequences ({} handshake, {} pivot, {} keypoint, {} end packets), {bad} mismatches",
            kinds[0], kinds[1], kinds[2], kinds[3]
        ),
    )
}

fn c5_warp_identities() -> Verdict {
    let pivot = synthetic::base_frame(96, 80, 0);
    let kps = synthetic::nonlinear_trajectories(7)[6].clone();
    let same = ReferenceWarp::default().reconstruct(&pivot, &kps, &kps).unwrap();
    let identity = same.pixels() == pivot.pixels();

    let (dx, dy) = (0.046875f32, -0.03125f32);
    let moved = synthetic::shifted(&kps, dx, dy, 1);
    let flow = dense_flow(&kps, &moved, DEFAULT_SIGMA, 96, 80).unwrap();
    let mut dev: f64 = 0.0;
    for y in 4..76 {
        for x in 4..92 {
            let v = flow.at(x, y);
            dev = dev.max((v[0] + dx as f64).abs()).max((v[1] + dy as f64).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_sum: f64 = 0.0;
    for trial in 0..8 {
        let drv = random_kps(&mut rng, 10, trial);
        for y in 0..64 {
            for x in 0..64 {
                let z = [(x as f64 + 0.5) / 32.0 - 1.0, (y as f64 + 0.5) / 32.0 - 1.0];
                let s: f64 = kernel_weights(&drv, DEFAULT_SIGMA, z).iter().sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
            }
        }
    }
    verdict(
        identity && dev < 1e-6 && worst_sum < 1e-6,
        format!("identity exact: {identity}; uniform-flow deviation {dev:.2e}; max |sum w - 1| {worst_sum:.2e}"),
    )
}

fn c6_oracle_reconstruction() -> Verdict {
    let (w, h, n) = (128, 128, 61);
    let base = synthetic::base_frame(w, h, 0);
    let decoder = Decoder { sr_factor: None, ..Decoder::default() }.with_sr(&IdentitySr);
    let cfg = |m| StreamConfig { width: w as u32, height: h as u32, interp_frames: m, sr_factor: 1, ..Default::default() };

    let linear = synthetic::linear_trajectories(n);
    let truth = synthesize_sequence(&base, &linear, DEFAULT_SIGMA).unwrap();
    let mut mismatched = Vec::new();
    for m in 0..=3u8 {
        let enc = Encoder::new(cfg(m)).encode(&truth, &SidecarKeypoints::new(linear.clone()), None).unwrap();
        let (delivered, _) = transmit(&enc.packets, &ChannelConfig::default()).unwrap();
        let dec = decoder.decode(&delivered).unwrap();
        let bad = dec.frames.len() != n || dec.frames.iter().zip(&truth).any(|(a, b)| a.pixels() != b.pixels());
        if bad {
            mismatched.push(m);
        }
    }

    let wavy = synthetic::nonlinear_trajectories(n);
    let truth = synthesize_sequence(&base, &wavy, DEFAULT_SIGMA).unwrap();
    let enc = Encoder::new(cfg(1)).encode(&truth, &SidecarKeypoints::new(wavy), None).unwrap();
    let (delivered, _) = transmit(&enc.packets, &ChannelConfig::default()).unwrap();
    let dec = decoder.decode(&delivered).unwrap();
    let rep = evaluate(&truth, &dec.frames, &enc.ledger, vec![], None).unwrap();
    verdict(
        mismatched.is_empty() && rep.mean_psnr >= 28.0,
        format!(
            "linear clip bit-exact for m=0..3 (mismatch at m={mismatched:?}); nonlinear m=1 mean PSNR {:.2} dB",
            rep.mean_psnr
        ),
    )
}

fn c7_patch_losslessness() -> Verdict {
    let mut failures = Vec::new();
    let mut cases = 0;
    for (w, h) in [(512, 512), (500, 500), (257, 129)] {
        let img = synthetic::scene_frame(w, h, 0, 0.3);
        for k in [16, 32, 64, 128] {
            for stride in [k, k / 2] {
                cases += 1;
                let out = enhance_image(&img, k, stride, &IdentitySr).unwrap();
                if out.pixels() != img.pixels() {
                    failures.push(format!("{w}x{h} k={k} stride={stride}"));
                }
            }
        }
    }
    verdict(failures.is_empty(), format!("{cases} size/patch/stride cases, failures: {failures:?}"))
}

fn c8_policy_monotonicity() -> Verdict {
    let base = "clip = policy\nframes = 300\nwidth = 64\nheight = 64\nsr = 1\nquality = off\n";
    let gamma = ablate(&format!("{base}sweep_gamma = 15, 30, 45\nd_bg = 0.05\n"));
    let dbg = ablate(&format!("{base}sweep_d_bg = 0.05, 0.06, 0.07\ngamma = 15\n"));
    let nonincreasing = |rows: &[AblationRow]| {
        rows.windows(2).all(|w| w[1].replacements <= w[0].replacements && w[1].bpp_full <= w[0].bpp_full)
    };
    let fmt = |rows: &[AblationRow]| {
        rows.iter().map(|r| format!("{}/{:.5}", r.replacements, r.bpp_full)).collect::<Vec<_>>().join(" ")
    };
    let moving = gamma[0].replacements > gamma[2].replacements && dbg[0].replacements > dbg[2].replacements;
    verdict(
        nonincreasing(&gamma) && nonincreasing(&dbg) && moving,
        format!(
            "replacements/full bpp, gamma 15,30,45: {}; d_bg 0.05,0.06,0.07: {}",
            fmt(&gamma),
            fmt(&dbg)
        ),
    )
}

/// Direct-summation SSIM: explicit 2-D Gaussian window at every valid
/// position, luma recomputed from RGB.
fn brute_ssim(a: &Frame, b: &Frame) -> f64 {
    let (w, h) = a.dims();
    let luma = |f: &Frame, x: usize, y: usize| {
        let [r, g, b] = f.pixel(x, y);
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    };
    let mut win = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (j, row) in win.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let (mut mx, mut my) = (0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = win[j][i] / total;
                    mx += wt * luma(a, ox + i, oy + j);
                    my += wt * luma(b, ox + i, oy + j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = win[j][i] / total;
                    let (p, q) = (luma(a, ox + i, oy + j) - mx, luma(b, ox + i, oy + j) - my);
                    vx += wt * p * p;
                    vy += wt * q * q;
                    cxy += wt * p * q;
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

fn c9_metric_oracles() -> Verdict {
    let a = Frame::filled(64, 64, [120, 60, 200], 0).unwrap();
    let b = Frame::filled(64, 64, [136, 44, 216], 0).unwrap();
    let p = psnr(&a, &b).unwrap();
    let closed_form = 20.0 * (255.0f64 / 16.0).log10();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = Frame::new(16, 16, (0..768).map(|_| rng.gen()).collect(), 0).unwrap();
        // Correlated partner so the scores spread over (-1, 1).
        let mix: f64 = rng.gen();
        let px: Vec<u8> =
            x.pixels().iter().map(|&v| (mix * v as f64 + (1.0 - mix) * rng.gen::<u8>() as f64) as u8).collect();
        let y = Frame::new(16, 16, px, 0).unwrap();
        worst = worst.max((ssim(&x, &y).unwrap() - brute_ssim(&x, &y)).abs());
    }
    let noise = Frame::new(16, 16, (0..768).map(|_| rng.gen()).collect(), 0).unwrap();
    let self_ssim = ssim(&noise, &noise).unwrap();

    let mut v = verdict(
        (p - closed_form).abs() < 1e-9 && worst < 1e-6 && self_ssim == 1.0,
        format!("PSNR(diff 16) {p:.4} dB; SSIM vs direct sum max error {worst:.1e}; SSIM(a,a) = {self_ssim}"),
    );
    if !within(p, 24.03, 0.01) {
        v.known_gap = Some(format!(
            "target 24.03 ±0.01 dB is not met: 20·log10(255/16) with MSE = 256 is {closed_form:.4} dB"
        ));
    }
    v
}

fn c10_loss_schedule() -> Verdict {
    let n = 120;
    let clip = synthetic::clip(synthetic::ClipKind::Linear, n, 64, 64).unwrap();
    let cfg = StreamConfig { width: 64, height: 64, interp_frames: 1, sr_factor: 1, ..Default::default() };
    let enc = Encoder::new(cfg).encode(&clip.frames, &SidecarKeypoints::new(clip.keypoints), None).unwrap();
    let mut results = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2, 3] {
        let (delivered, rep) = transmit(&enc.packets, &ChannelConfig::lossy(0.3, seed)).unwrap();
        let opts = DecodeOptions { backend: SrChoice::Identity, ..Default::default() };
        let dec = thc::harness::decode_packets(&delivered, &opts).unwrap();
        let covered = dec.schedule.validate().is_ok()
            && dec.schedule.len() == n
            && dec.schedule.tags.iter().all(|t| !matches!(t, FrameTag::Keyed(i) if dec.missing_keyed.contains(i)));
        ok &= covered && dec.frames.len() == n && !dec.missing_keyed.is_empty();
        results.push(format!("seed {seed}: {} of {} keyed lost", rep.dropped(), rep.keypoints.sent));
    }
    let planned = build_schedule(n, 1).unwrap();
    verdict(ok && planned.len() == n, format!("{n} frames decoded every time; {}", results.join(", ")))
}

fn c11_out_of_scope() -> Verdict {
    let f = vec![synthetic::base_frame(32, 32, 0)];
    let ledger = thc::RateLedger { keypoint_payload_bits: 640, displayed_frames: 1, ..Default::default() };
    let rep = evaluate(&f, &f, &ledger, vec![], None).unwrap();
    verdict(
        rep.fid.is_none(),
        "learned-model quality numbers and FID are not reproduced; reports leave fid null",
    )
}

fn main() {
    let criteria: [(u8, &str, fn() -> Verdict); 11] = [
        (1, "BPP vs interpolation depth", c1_bpp_by_interp_depth),
        (2, "BPP of codec configurations", c2_bpp_configurations),
        (3, "keypoint payload arithmetic", c3_payload_bytes),
        (4, "bitstream roundtrip", c4_stream_roundtrip),
        (5, "warp identities", c5_warp_identities),
        (6, "oracle reconstruction", c6_oracle_reconstruction),
        (7, "patch SR losslessness", c7_patch_losslessness),
        (8, "pivot policy monotonicity", c8_policy_monotonicity),
        (9, "metric oracles", c9_metric_oracles),
        (10, "loss-policy schedule validity", c10_loss_schedule),
        (11, "neural quality numbers (out of scope)", c11_out_of_scope),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let v = run();
        let tag = match (&v.known_gap, v.pass) {
            (_, false) => "FAIL",
            (Some(_), true) => "FAIL (known gap)",
            (None, true) => "PASS",
        };
        println!("criterion {n:>2} {tag}: {name} — {}", v.detail);
        if let Some(gap) = &v.known_gap {
            println!("             {gap}");
        }
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
