//! Bicubic 2x upscale followed by patch-wise enhancement, with and without
//! overlapping tiles.

use thc::metrics::{psnr, ssim};
use thc::sr::{bicubic_resample, degrade_for_training, enhance_image, super_resolve, tile, Patch};
use thc::{synthetic, IdentitySr, SrBackend, UnsharpSr};

fn main() -> thc::Result<()> {
    let high = synthetic::scene_frame(256, 256, 0, 0.4);
    let low = bicubic_resample(&high, 128, 128)?;

    let grid = tile(257, 129, 64, 32)?;
    println!("257x129, k=64 stride=32: {} tiles over {}x{}", grid.origins.len(), grid.padded_width, grid.padded_height);
    let same = enhance_image(&high, 64, 64, &IdentitySr)?;
    println!("identity backend lossless: {}", same == high);

    let backends: [(&str, &dyn SrBackend); 2] = [("identity", &IdentitySr), ("unsharp", &UnsharpSr::default())];
    for (name, b) in backends {
        for (label, stride) in [("tiled", 64), ("overlap", 32)] {
            let up = super_resolve(&low, 2, 64, stride, b)?;
            println!("{name:>8} {label:>7}: PSNR {:5.2} dB  SSIM {:.4}", psnr(&high, &up)?, ssim(&high, &up)?);
        }
    }

    let patch = Patch::from_frame(&synthetic::scene_frame(64, 64, 0, 1.0));
    for f in [2.0, 4.0, 6.0] {
        let d = degrade_for_training(&patch, f)?;
        let (a, b) = (patch.clone().into_frame(0)?, d.into_frame(0)?);
        println!("training degradation x{f}: PSNR {:5.2} dB", psnr(&a, &b)?);
    }
    Ok(())
}
