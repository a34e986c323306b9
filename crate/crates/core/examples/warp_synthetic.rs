//! Reconstruct frames from a pivot and keypoints with the reference warp.
//! Pass a directory to also write the frames as PNG.

use thc::metrics::psnr;
use thc::warp::{dense_flow, synthesize_sequence, DEFAULT_SIGMA};
use thc::{synthetic, ReferenceWarp, WarpBackend};

fn main() -> thc::Result<()> {
    let base = synthetic::base_frame(128, 128, 0);
    let traj = synthetic::nonlinear_trajectories(12);
    let truth = synthesize_sequence(&base, &traj, DEFAULT_SIGMA)?;
    let warp = ReferenceWarp::default();

    for t in [1, 4, 8, 11] {
        let out = warp.reconstruct(&base, &traj[0], &traj[t])?;
        let flow = dense_flow(&traj[0], &traj[t], DEFAULT_SIGMA, 128, 128)?;
        let peak = flow.vectors.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max) * 64.0;
        println!(
            "frame {t:2}: peak displacement {peak:4.2} px, PSNR vs pivot {:5.2} dB, vs truth {:5.2} dB",
            psnr(&base, &out)?,
            psnr(&truth[t], &out)?
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        thc::io::write_png_dir(std::path::Path::new(&dir), &truth)?;
        println!("wrote {} frames to {dir}", truth.len());
    }
    Ok(())
}
