//! Graph-free numeric kernels: convolution via im2col + GEMM, batch-norm,
//! bilinear/nearest resampling.
//!
//! These are used by the graph ops and directly by the data pipeline.

use super::{Shape, Tensor};
use crate::{Error, Real, Result};

/// Per-side zero padding of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn uniform(p: usize) -> Self {
        Padding {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    /// Padding that keeps the spatial size for a stride-1 convolution.
    /// Even kernels put the extra row/column at the bottom/right.
    pub const fn same(kh: usize, kw: usize) -> Self {
        Padding {
            top: (kh - 1) / 2,
            bottom: kh / 2,
            left: (kw - 1) / 2,
            right: kw / 2,
        }
    }
}

/// `(len + pad - k) / stride + 1`, rejecting non-integer or non-positive results.
pub fn conv_output_len(
    op: &'static str,
    len: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid(op, "stride must be positive"));
    }
    let padded = len + pad;
    if padded < k || (padded - k) % stride != 0 {
        return Err(Error::OutputSize {
            op,
            detail: format!("({len} + {pad} - {k}) / {stride} + 1"),
        });
    }
    Ok((padded - k) / stride + 1)
}

/// Geometry of one image under a convolution window sweep.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: Padding,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == Padding::default()
    }
}

fn im2col(x: &[Real], g: &ConvGeom, cols: &mut [Real]) {
    let n_cols = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * n_cols;
                let out = &mut cols[row..row + n_cols];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + i) as isize - g.pad.top as isize;
                    let seg = &mut out[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, dst) in seg.iter_mut().enumerate() {
                        let iw = (ow * g.stride + j) as isize - g.pad.left as isize;
                        *dst = if iw < 0 || iw >= g.w as isize {
                            0.0
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[Real], g: &ConvGeom, x: &mut [Real]) {
    let n_cols = g.cols();
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * n_cols;
                let src = &cols[row..row + n_cols];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + i) as isize - g.pad.top as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for ow in 0..g.wo {
                        let iw = (ow * g.stride + j) as isize - g.pad.left as isize;
                        if iw >= 0 && (iw as usize) < g.w {
                            dst[iw as usize] += src[oh * g.wo + ow];
                        }
                    }
                }
            }
        }
    }
}

/// `c = a · b + beta · c` where `a` is `m×k`, `b` is `k×n`, `c` is row-major `m×n`.
/// Row/column strides of `a` and `b` select plain or transposed views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[Real],
    (rsa, csa): (usize, usize),
    b: &[Real],
    (rsb, csb): (usize, usize),
    beta: Real,
    c: &mut [Real],
) {
    assert!(m * k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k * n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: bounds of every strided view were checked above.
    unsafe {
        #[cfg(feature = "f64")]
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
        #[cfg(not(feature = "f64"))]
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_bias(op: &'static str, bias: Option<&Tensor>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.numel() != channels {
            return Err(Error::ShapeMismatch {
                op,
                left: b.shape(),
                right: Shape::new(1, channels, 1, 1),
            });
        }
    }
    Ok(())
}

fn add_bias(out: &mut [Real], bias: Option<&Tensor>, plane: usize) {
    if let Some(b) = bias {
        for (chunk, &bv) in out.chunks_mut(plane).zip(b.data().iter().cycle()) {
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn bias_grad(dout: &Tensor) -> Tensor {
    let s = dout.shape();
    let mut db = vec![0.0; s.c];
    for (idx, chunk) in dout.data().chunks(s.plane()).enumerate() {
        db[idx % s.c] += chunk.iter().sum::<Real>();
    }
    Tensor::vector(db)
}

fn conv_geom(x: Shape, w: Shape, stride: usize, pad: Padding) -> Result<ConvGeom> {
    const OP: &str = "conv2d";
    if x.c != w.c {
        return Err(Error::ShapeMismatch {
            op: OP,
            left: x,
            right: w,
        });
    }
    let ho = conv_output_len(OP, x.h, w.h, stride, pad.top + pad.bottom)?;
    let wo = conv_output_len(OP, x.w, w.w, stride, pad.left + pad.right)?;
    Ok(ConvGeom {
        c: x.c,
        h: x.h,
        w: x.w,
        kh: w.h,
        kw: w.w,
        stride,
        pad,
        ho,
        wo,
    })
}

/// Cross-correlation of `x: [N, Cin, H, W]` with `w: [Cout, Cin, Kh, Kw]`.
pub fn conv2d(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: Padding,
) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), w.shape());
    let g = conv_geom(xs, ws, stride, pad)?;
    check_bias("conv2d", bias, ws.n)?;
    let out_shape = Shape::new(xs.n, ws.n, g.ho, g.wo);
    let mut out = vec![0.0; out_shape.numel()];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; g.rows() * g.cols()]
    };
    let in_len = xs.c * xs.plane();
    let out_len = ws.n * g.cols();
    for b in 0..xs.n {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        let cols_ref: &[Real] = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, &g, &mut cols);
            &cols
        };
        gemm(
            ws.n,
            g.rows(),
            g.cols(),
            w.data(),
            (g.rows(), 1),
            cols_ref,
            (g.cols(), 1),
            0.0,
            &mut out[b * out_len..(b + 1) * out_len],
        );
    }
    add_bias(&mut out, bias, g.cols());
    Tensor::from_vec(out_shape, out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: Padding,
    dout: &Tensor,
    need: [bool; 3],
) -> Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
    let (xs, ws) = (x.shape(), w.shape());
    let g = conv_geom(xs, ws, stride, pad)?;
    let in_len = xs.c * xs.plane();
    let out_len = ws.n * g.cols();
    let mut dx = need[0].then(|| vec![0.0; xs.numel()]);
    let mut dw = need[1].then(|| vec![0.0; ws.numel()]);
    let mut cols = vec![0.0; g.rows() * g.cols()];
    for b in 0..xs.n {
        let db = &dout.data()[b * out_len..(b + 1) * out_len];
        if let Some(dw) = dw.as_mut() {
            let xb = &x.data()[b * in_len..(b + 1) * in_len];
            let cols_ref: &[Real] = if g.is_pointwise() {
                xb
            } else {
                im2col(xb, &g, &mut cols);
                &cols
            };
            // dW += dOut_b · cols_bᵀ
            gemm(
                ws.n,
                g.cols(),
                g.rows(),
                db,
                (g.cols(), 1),
                cols_ref,
                (1, g.cols()),
                1.0,
                dw,
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_len..(b + 1) * in_len];
            if g.is_pointwise() {
                gemm(
                    g.rows(),
                    ws.n,
                    g.cols(),
                    w.data(),
                    (1, g.rows()),
                    db,
                    (g.cols(), 1),
                    0.0,
                    dxb,
                );
            } else {
                // dcols = Wᵀ · dOut_b
                gemm(
                    g.rows(),
                    ws.n,
                    g.cols(),
                    w.data(),
                    (1, g.rows()),
                    db,
                    (g.cols(), 1),
                    0.0,
                    &mut cols,
                );
                col2im(&cols, &g, dxb);
            }
        }
    }
    let dx = dx.map(|d| Tensor::from_vec(xs, d)).transpose()?;
    let dw = dw.map(|d| Tensor::from_vec(ws, d)).transpose()?;
    let dbias = need[2].then(|| bias_grad(dout));
    Ok((dx, dw, dbias))
}

fn conv_transpose_geom(x: Shape, w: Shape, stride: usize, padding: usize) -> Result<ConvGeom> {
    const OP: &str = "conv_transpose2d";
    if x.c != w.n {
        return Err(Error::ShapeMismatch {
            op: OP,
            left: x,
            right: w,
        });
    }
    if stride == 0 {
        return Err(Error::invalid(OP, "stride must be positive"));
    }
    let out_len = |len: usize, k: usize| -> Result<usize> {
        let full = (len - 1) * stride + k;
        if full <= 2 * padding {
            return Err(Error::OutputSize {
                op: OP,
                detail: format!("({len} - 1) * {stride} - 2 * {padding} + {k}"),
            });
        }
        Ok(full - 2 * padding)
    };
    let ho = out_len(x.h, w.h)?;
    let wo = out_len(x.w, w.w)?;
    // Geometry of the adjoint convolution mapping [Cout, ho, wo] back to [Cin, h, w].
    Ok(ConvGeom {
        c: w.c,
        h: ho,
        w: wo,
        kh: w.h,
        kw: w.w,
        stride,
        pad: Padding::uniform(padding),
        ho: x.h,
        wo: x.w,
    })
}

/// Transposed convolution of `x: [N, Cin, H, W]` with `w: [Cin, Cout, Kh, Kw]`;
/// the adjoint of [`conv2d`] with the same weight.
pub fn conv_transpose2d(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), w.shape());
    let g = conv_transpose_geom(xs, ws, stride, padding)?;
    check_bias("conv_transpose2d", bias, ws.c)?;
    let out_shape = Shape::new(xs.n, ws.c, g.h, g.w);
    let mut out = vec![0.0; out_shape.numel()];
    let mut cols = vec![0.0; g.rows() * g.cols()];
    let in_len = xs.c * xs.plane();
    let out_len = ws.c * g.h * g.w;
    for b in 0..xs.n {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        // cols = Wmatᵀ · X_b, Wmat is Cin × (Cout·Kh·Kw)
        gemm(
            g.rows(),
            xs.c,
            g.cols(),
            w.data(),
            (1, g.rows()),
            xb,
            (g.cols(), 1),
            0.0,
            &mut cols,
        );
        col2im(&cols, &g, &mut out[b * out_len..(b + 1) * out_len]);
    }
    add_bias(&mut out, bias, g.h * g.w);
    Tensor::from_vec(out_shape, out)
}

/// Gradients of [`conv_transpose2d`] with respect to input, weight and bias.
pub fn conv_transpose2d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    padding: usize,
    dout: &Tensor,
    need: [bool; 3],
) -> Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
    let (xs, ws) = (x.shape(), w.shape());
    let g = conv_transpose_geom(xs, ws, stride, padding)?;
    let in_len = xs.c * xs.plane();
    let out_len = ws.c * g.h * g.w;
    let mut dx = need[0].then(|| vec![0.0; xs.numel()]);
    let mut dw = need[1].then(|| vec![0.0; ws.numel()]);
    let mut cols = vec![0.0; g.rows() * g.cols()];
    if dx.is_some() || dw.is_some() {
        for b in 0..xs.n {
            im2col(&dout.data()[b * out_len..(b + 1) * out_len], &g, &mut cols);
            if let Some(dx) = dx.as_mut() {
                gemm(
                    xs.c,
                    g.rows(),
                    g.cols(),
                    w.data(),
                    (g.rows(), 1),
                    &cols,
                    (g.cols(), 1),
                    0.0,
                    &mut dx[b * in_len..(b + 1) * in_len],
                );
            }
            if let Some(dw) = dw.as_mut() {
                let xb = &x.data()[b * in_len..(b + 1) * in_len];
                gemm(
                    xs.c,
                    g.cols(),
                    g.rows(),
                    xb,
                    (g.cols(), 1),
                    &cols,
                    (1, g.cols()),
                    1.0,
                    dw,
                );
            }
        }
    }
    let dx = dx.map(|d| Tensor::from_vec(xs, d)).transpose()?;
    let dw = dw.map(|d| Tensor::from_vec(ws, d)).transpose()?;
    let dbias = need[2].then(|| bias_grad(dout));
    Ok((dx, dw, dbias))
}

/// Per-channel `(mean, biased variance)` over the batch and spatial axes.
pub fn channel_moments(x: &Tensor) -> (Vec<Real>, Vec<Real>) {
    let s = x.shape();
    let count = (s.n * s.plane()) as Real;
    let mut mean = vec![0.0; s.c];
    for (idx, chunk) in x.data().chunks(s.plane()).enumerate() {
        mean[idx % s.c] += chunk.iter().sum::<Real>();
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; s.c];
    for (idx, chunk) in x.data().chunks(s.plane()).enumerate() {
        let m = mean[idx % s.c];
        var[idx % s.c] += chunk.iter().map(|v| (v - m) * (v - m)).sum::<Real>();
    }
    var.iter_mut().for_each(|v| *v /= count);
    (mean, var)
}

/// `gamma · (x − mean) · invstd + beta`, per channel.
pub fn batch_norm_apply(
    x: &Tensor,
    gamma: &[Real],
    beta: &[Real],
    mean: &[Real],
    invstd: &[Real],
) -> Tensor {
    let s = x.shape();
    let mut out = x.clone();
    for (idx, chunk) in out.data_mut().chunks_mut(s.plane()).enumerate() {
        let c = idx % s.c;
        let (scale, m, b) = (gamma[c] * invstd[c], mean[c], beta[c]);
        chunk.iter_mut().for_each(|v| *v = (*v - m) * scale + b);
    }
    out
}

/// Batch-norm gradients. With `batch_stats` the gradient flows through the
/// per-channel statistics as well.
pub fn batch_norm_backward(
    x: &Tensor,
    gamma: &[Real],
    mean: &[Real],
    invstd: &[Real],
    dout: &Tensor,
    batch_stats: bool,
) -> (Tensor, Vec<Real>, Vec<Real>) {
    let s = x.shape();
    let plane = s.plane();
    let count = (s.n * plane) as Real;
    let mut dgamma = vec![0.0; s.c];
    let mut dbeta = vec![0.0; s.c];
    for (idx, (xc, dc)) in x.data().chunks(plane).zip(dout.data().chunks(plane)).enumerate() {
        let c = idx % s.c;
        for (&xv, &dv) in xc.iter().zip(dc) {
            dbeta[c] += dv;
            dgamma[c] += dv * (xv - mean[c]) * invstd[c];
        }
    }
    let mut dx = Tensor::zeros(s);
    for (idx, ((xc, dc), out)) in x
        .data()
        .chunks(plane)
        .zip(dout.data().chunks(plane))
        .zip(dx.data_mut().chunks_mut(plane))
        .enumerate()
    {
        let c = idx % s.c;
        let k = gamma[c] * invstd[c];
        if batch_stats {
            for ((&xv, &dv), o) in xc.iter().zip(dc).zip(out.iter_mut()) {
                let xhat = (xv - mean[c]) * invstd[c];
                *o = k * (dv - dbeta[c] / count - xhat * dgamma[c] / count);
            }
        } else {
            for (&dv, o) in dc.iter().zip(out.iter_mut()) {
                *o = k * dv;
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Source index pair and blend weight for each output position, using
/// half-pixel centres: `src = (i + 0.5) · in / out − 0.5`, clamped at 0.
fn bilinear_axis(in_len: usize, out_len: usize) -> Vec<(usize, usize, Real)> {
    let scale = in_len as Real / out_len as Real;
    (0..out_len)
        .map(|i| {
            let src = ((i as Real + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as Real)
        })
        .collect()
}

/// Bilinear resampling of every plane to `h × w`.
pub fn resize_bilinear(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("resize", "target dims must be at least 1"));
    }
    let s = x.shape();
    if (s.h, s.w) == (h, w) {
        return Ok(x.clone());
    }
    let ys = bilinear_axis(s.h, h);
    let xs = bilinear_axis(s.w, w);
    let out_shape = Shape::new(s.n, s.c, h, w);
    let mut out = vec![0.0; out_shape.numel()];
    for (src, dst) in x.data().chunks(s.plane()).zip(out.chunks_mut(h * w)) {
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            let r0 = &src[y0 * s.w..(y0 + 1) * s.w];
            let r1 = &src[y1 * s.w..(y1 + 1) * s.w];
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let top = (1.0 - lx) * r0[x0] + lx * r0[x1];
                let bottom = (1.0 - lx) * r1[x0] + lx * r1[x1];
                dst[oy * w + ox] = (1.0 - ly) * top + ly * bottom;
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Adjoint of [`resize_bilinear`]: scatters output gradients back with the
/// same blend weights.
pub fn resize_bilinear_backward(dout: &Tensor, in_shape: Shape) -> Tensor {
    let s = in_shape;
    let (h, w) = (dout.shape().h, dout.shape().w);
    if (s.h, s.w) == (h, w) {
        return dout.clone();
    }
    let ys = bilinear_axis(s.h, h);
    let xs = bilinear_axis(s.w, w);
    let mut dx = Tensor::zeros(s);
    for (dst, src) in dx
        .data_mut()
        .chunks_mut(s.plane())
        .zip(dout.data().chunks(h * w))
    {
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let g = src[oy * w + ox];
                dst[y0 * s.w + x0] += (1.0 - ly) * (1.0 - lx) * g;
                dst[y0 * s.w + x1] += (1.0 - ly) * lx * g;
                dst[y1 * s.w + x0] += ly * (1.0 - lx) * g;
                dst[y1 * s.w + x1] += ly * lx * g;
            }
        }
    }
    dx
}

/// Nearest-neighbour resampling with half-pixel centres.
pub fn resize_nearest(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("resize", "target dims must be at least 1"));
    }
    let s = x.shape();
    let pick = |in_len: usize, out_len: usize, i: usize| {
        (((i as f64 + 0.5) * in_len as f64 / out_len as f64) as usize).min(in_len - 1)
    };
    let out_shape = Shape::new(s.n, s.c, h, w);
    let mut out = Vec::with_capacity(out_shape.numel());
    for src in x.data().chunks(s.plane()) {
        for oy in 0..h {
            let y = pick(s.h, h, oy);
            for ox in 0..w {
                out.push(src[y * s.w + pick(s.w, w, ox)]);
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}
