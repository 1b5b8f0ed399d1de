//! Full-reference image quality: PSNR, SSIM and pixel-domain VIF.
//!
//! All metrics work on 8-bit RGB images and are independent of the autodiff
//! engine. SSIM and VIF are computed on luma.

mod evaluate;
mod filter;

use crate::data::RgbImage;
use crate::{Error, Result};

pub use evaluate::{evaluate_dataset, MetricReport, MetricRow};

use filter::{filter_valid, gaussian_window, Plane};

/// Value reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

fn check_shapes(op: &str, a: &RgbImage, b: &RgbImage) -> Result<()> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::Metric(format!(
            "{op}: images are {}x{} and {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// `10·log10(255² / MSE)` over all channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &RgbImage, candidate: &RgbImage) -> Result<f64> {
    check_shapes("psnr", reference, candidate)?;
    let sse: f64 = reference
        .pixels
        .iter()
        .zip(&candidate.pixels)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    if sse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = sse / reference.pixels.len() as f64;
    Ok((10.0 * (255.0f64.powi(2) / mse).log10()).min(PSNR_CAP_DB))
}

pub(crate) fn luma(image: &RgbImage) -> Plane {
    let data = image
        .pixels
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    Plane {
        h: image.height,
        w: image.width,
        data,
    }
}

const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Mean local SSIM on luma, 11×11 Gaussian window (σ = 1.5), valid region.
pub fn ssim(reference: &RgbImage, candidate: &RgbImage) -> Result<f64> {
    check_shapes("ssim", reference, candidate)?;
    if reference.height < 11 || reference.width < 11 {
        return Err(Error::Metric(format!(
            "ssim: {}x{} image is smaller than the 11x11 window",
            reference.height, reference.width
        )));
    }
    let win = gaussian_window(11, 1.5);
    let (a, b) = (luma(reference), luma(candidate));
    let mu1 = filter_valid(&a, &win);
    let mu2 = filter_valid(&b, &win);
    let s11 = filter_valid(&a.zip(&a, |x, y| x * y), &win);
    let s22 = filter_valid(&b.zip(&b, |x, y| x * y), &win);
    let s12 = filter_valid(&a.zip(&b, |x, y| x * y), &win);
    let mut total = 0.0;
    for i in 0..mu1.data.len() {
        let (m1, m2) = (mu1.data[i], mu2.data[i]);
        let v1 = s11.data[i] - m1 * m1;
        let v2 = s22.data[i] - m2 * m2;
        let cov = s12.data[i] - m1 * m2;
        total += ((2.0 * m1 * m2 + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((m1 * m1 + m2 * m2 + SSIM_C1) * (v1 + v2 + SSIM_C2));
    }
    Ok(total / mu1.data.len() as f64)
}

/// Pixel-domain VIF and the number of pyramid levels it was computed over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vif {
    pub value: f64,
    pub levels: usize,
}

const VIF_NOISE_VAR: f64 = 2.0;
const VIF_FLOOR: f64 = 1e-10;

/// Four-level pixel-domain VIF on luma. Levels whose window no longer fits
/// the image are skipped; at least one level must fit.
pub fn vif_p(reference: &RgbImage, candidate: &RgbImage) -> Result<Vif> {
    check_shapes("vif", reference, candidate)?;
    let mut a = luma(reference);
    let mut b = luma(candidate);
    let (mut num, mut den) = (0.0, 0.0);
    let mut levels = 0;
    for scale in 1..=4u32 {
        let n = (1usize << (5 - scale)) + 1;
        let win = gaussian_window(n, n as f64 / 5.0);
        if scale > 1 {
            if a.h < n || a.w < n {
                break;
            }
            a = filter_valid(&a, &win).subsample2();
            b = filter_valid(&b, &win).subsample2();
        }
        if a.h < n || a.w < n {
            break;
        }
        let mu1 = filter_valid(&a, &win);
        let mu2 = filter_valid(&b, &win);
        let s11 = filter_valid(&a.zip(&a, |x, y| x * y), &win);
        let s22 = filter_valid(&b.zip(&b, |x, y| x * y), &win);
        let s12 = filter_valid(&a.zip(&b, |x, y| x * y), &win);
        for i in 0..mu1.data.len() {
            let (m1, m2) = (mu1.data[i], mu2.data[i]);
            let mut sigma1 = (s11.data[i] - m1 * m1).max(0.0);
            let sigma2 = (s22.data[i] - m2 * m2).max(0.0);
            let sigma12 = s12.data[i] - m1 * m2;
            let mut g = sigma12 / (sigma1 + VIF_FLOOR);
            let mut sv = sigma2 - g * sigma12;
            if sigma1 < VIF_FLOOR {
                g = 0.0;
                sv = sigma2;
                sigma1 = 0.0;
            }
            if sigma2 < VIF_FLOOR {
                g = 0.0;
                sv = 0.0;
            }
            if g < 0.0 {
                sv = sigma2;
                g = 0.0;
            }
            sv = sv.max(VIF_FLOOR);
            num += (1.0 + g * g * sigma1 / (sv + VIF_NOISE_VAR)).log10();
            den += (1.0 + sigma1 / VIF_NOISE_VAR).log10();
        }
        levels += 1;
    }
    if levels == 0 {
        return Err(Error::Metric(format!(
            "vif: {}x{} image is smaller than the 17x17 window",
            reference.height, reference.width
        )));
    }
    // A reference with no variance at any level carries no information to lose.
    let value = if den == 0.0 { 1.0 } else { num / den };
    Ok(Vif { value, levels })
}
