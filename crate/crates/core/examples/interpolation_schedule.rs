//! Which frames carry keypoints, and how the receiver fills the rest.

use thc::interp::{build_schedule, reference_interpolate, PivotRef};
use thc::metrics::psnr;
use thc::model::Fraction;
use thc::warp::{synthesize_sequence, DEFAULT_SIGMA};
use thc::{synthetic, FrameTag, ReferenceWarp, WarpBackend};

fn main() -> thc::Result<()> {
    for m in 0..=3u8 {
        let s = build_schedule(10, m)?;
        let line: Vec<String> = s
            .tags
            .iter()
            .map(|t| match t {
                FrameTag::PivotDirect => "P".into(),
                FrameTag::Keyed(_) => "K".into(),
                FrameTag::Interpolated { fraction, .. } => format!("{}/{}", fraction.num, fraction.den),
                FrameTag::Hold(_) => "H".into(),
            })
            .collect();
        println!("m={m}: {}  ({} keyed)", line.join(" "), s.keyed_indices().count());
    }

    // A frame between keyed neighbours 1 and 5 (m = 3).
    let base = synthetic::base_frame(96, 96, 0);
    for (name, traj) in [("linear", synthetic::linear_trajectories(6)), ("nonlinear", synthetic::nonlinear_trajectories(6))] {
        let truth = synthesize_sequence(&base, &traj, DEFAULT_SIGMA)?;
        let pivot = PivotRef { frame: &base, keypoints: &traj[0] };
        let warp = ReferenceWarp::default();
        let mid = reference_interpolate(&traj[1], &traj[5], Fraction::new(2, 4)?, pivot, &warp, 3)?;
        let keyed = warp.reconstruct(&base, &traj[0], &traj[3])?;
        println!(
            "{name:>9}: frame 3 interpolated {:5.2} dB, keyed {:5.2} dB",
            psnr(&truth[3], &mid)?,
            psnr(&truth[3], &keyed)?
        );
    }
    Ok(())
}
