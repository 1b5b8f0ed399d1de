//! PSNR, SSIM and VIF of a synthetic image against noisy and blurred copies.
//!
//! `cargo run --release --example metrics`

use msg_unet::data::synthetic::synthetic_pair;
use msg_unet::data::RgbImage;
use msg_unet::metrics::{psnr, ssim, vif_p};
use msg_unet::nets::Resolution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn box_blur(image: &RgbImage) -> RgbImage {
    let (h, w) = (image.height, image.width);
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0u32; 3];
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    let p = image.get(yy, xx);
                    (0..3).for_each(|c| acc[c] += p[c] as u32);
                }
            }
            let n = ((y + 2).min(h) - y.saturating_sub(1)) * ((x + 2).min(w) - x.saturating_sub(1));
            out.put(y, x, acc.map(|a| (a as f64 / n as f64).round() as u8));
        }
    }
    out
}

fn main() -> msg_unet::Result<()> {
    let (_, reference) = synthetic_pair(Resolution::new(128, 128), 1);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let noisy = RgbImage::new(
        reference.height,
        reference.width,
        reference.pixels.iter().map(|&p| (p as i16 + r.random_range(-12..=12)).clamp(0, 255) as u8).collect(),
    )?;
    let blurred = box_blur(&box_blur(&reference));
    println!("{:<10} {:>9} {:>8} {:>8}", "candidate", "psnr_db", "ssim", "vif");
    for (name, candidate) in [("identical", &reference), ("noisy", &noisy), ("blurred", &blurred)] {
        println!(
            "{name:<10} {:>9.3} {:>8.4} {:>8.4}",
            psnr(&reference, candidate)?,
            ssim(&reference, candidate)?,
            vif_p(&reference, candidate)?.value
        );
    }
    Ok(())
}
