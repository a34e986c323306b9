//! Bits per pixel across interpolation depth and codec configuration.

use std::path::Path;

use thc::harness::{run_ablation, AblationSpec};

fn main() -> thc::Result<()> {
    let rows = |spec: &str| run_ablation(&AblationSpec::parse(spec, Path::new("."))?);
    let base = "frames = 300\nwidth = 256\nheight = 256\nquality = off\n";

    println!("{:>3} {:>10} {:>10} {:>8}", "m", "bpp", "bpp(full)", "keyed");
    for r in rows(&format!("{base}sr = 2\nm = 0,1,2,3"))? {
        println!("{:>3} {:>10.6} {:>10.6} {:>8}", r.m, r.bpp_paper, r.bpp_full, r.keyed_packets);
    }

    println!();
    for (name, extra) in [
        ("keypoints, 256x256", "sr = 1\nm = 0"),
        ("+ interpolation", "sr = 1\nm = 1"),
        ("+ 2x SR, 512x512", "sr = 2\nm = 1"),
    ] {
        let r = &rows(&format!("{base}{extra}"))?[0];
        println!("{name:<20} {:.6}", r.bpp_paper);
    }

    println!();
    let policy = "clip = policy\nframes = 300\nwidth = 64\nheight = 64\nsr = 1\nquality = off\n";
    for r in rows(&format!("{policy}sweep_gamma = 15, 30, 45"))? {
        println!("gamma {:>2}: {} replacements, full bpp {:.5}", r.gamma, r.replacements, r.bpp_full);
    }
    Ok(())
}
