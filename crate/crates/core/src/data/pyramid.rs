use crate::nets::Resolution;
use crate::tensor::kernels::resize_bilinear;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// One image per scale of the chain, coarsest first.
pub type ScalePyramid = Vec<Tensor>;

/// Resizes `image` to the finest scale, then halves it repeatedly.
pub fn make_pyramid(image: &Tensor, scales: &[Resolution]) -> Result<ScalePyramid> {
    let finest = *scales
        .last()
        .ok_or_else(|| Error::invalid("make_pyramid", "empty scale chain"))?;
    let s = image.shape();
    if s.h * finest.w != s.w * finest.h {
        return Err(Error::invalid(
            "make_pyramid",
            format!("image {}x{} does not share the aspect ratio of {finest}", s.h, s.w),
        ));
    }
    if s.h < finest.h {
        return Err(Error::invalid(
            "make_pyramid",
            format!("image {}x{} is smaller than the finest scale {finest}", s.h, s.w),
        ));
    }
    let mut out = Vec::with_capacity(scales.len());
    let mut current = if (s.h, s.w) == (finest.h, finest.w) {
        image.clone()
    } else {
        resize_bilinear(image, finest.h, finest.w)?
    };
    for pair in scales.windows(2).rev() {
        let next = resize_bilinear(&current, pair[0].h, pair[0].w)?;
        out.push(current);
        current = next;
    }
    out.push(current);
    out.reverse();
    Ok(out)
}

/// Destroys all detail above `degrade_to`, then resamples the degraded copy
/// to every scale: coarser ones by halving, finer ones by a direct bilinear
/// upsample.
pub fn ablation_degrade(image: &Tensor, degrade_to: Resolution, scales: &[Resolution]) -> Result<ScalePyramid> {
    let idx = scales.iter().position(|&r| r == degrade_to).ok_or_else(|| {
        let chain: Vec<String> = scales.iter().map(|r| r.to_string()).collect();
        Error::invalid(
            "ablation_degrade",
            format!("{degrade_to} is not in the scale chain [{}]", chain.join(", ")),
        )
    })?;
    let mut pyramid = make_pyramid(image, scales)?;
    for k in idx + 1..scales.len() {
        pyramid[k] = resize_bilinear(&pyramid[idx], scales[k].h, scales[k].w)?;
    }
    Ok(pyramid)
}

/// Mirrors every image left to right.
pub fn flip_horizontal(t: &Tensor) -> Tensor {
    let s = t.shape();
    let mut out = t.clone();
    for (dst, src) in out.data_mut().chunks_exact_mut(s.w).zip(t.data().chunks_exact(s.w)) {
        for (d, v) in dst.iter_mut().zip(src.iter().rev()) {
            *d = *v;
        }
    }
    out
}
