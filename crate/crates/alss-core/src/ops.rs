//! Forward primitives over [`Tensor4`]: grouped convolution, inference batch
//! norm, activations, pooling, channel split/concat/shuffle, nearest
//! upsampling, and a central-difference gradient oracle.
//!
//! Everything is a pure function of its inputs. Convolution parallelizes
//! over (batch, output-channel) planes; each plane is written by exactly one
//! task, so results are bitwise independent of thread count.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::{BnParams, ConvParams, Tensor4};

/// Grouped 2-D cross-correlation with zero padding and square kernels.
///
/// Output extent per axis is `floor((in + 2·pad − k)/stride) + 1`; depthwise
/// convolution is the `groups == in_channels == out_channels` case.
/// Accumulation is in `f64` regardless of storage scalar.
pub fn conv2d<S: Scalar>(x: &Tensor4<S>, p: &ConvParams<S>) -> Result<Tensor4<S>> {
    if x.channels() != p.in_channels {
        return Err(CoreError::shape(format!(
            "conv2d: input has {} channels, params expect {}",
            x.channels(),
            p.in_channels
        )));
    }
    if p.in_channels % p.groups != 0 || p.out_channels % p.groups != 0 {
        return Err(CoreError::GroupMismatch {
            groups: p.groups,
            channels: p.in_channels,
        });
    }
    if p.weights.len() != p.weight_count() {
        return Err(CoreError::shape("conv2d: weight length mismatch"));
    }
    let (oh, ow) = match (p.out_extent(x.height()), p.out_extent(x.width())) {
        (Some(h), Some(w)) if h > 0 && w > 0 => (h, w),
        _ => {
            return Err(CoreError::shape(format!(
                "conv2d: empty output for input {}x{} kernel {} stride {} pad {}",
                x.height(),
                x.width(),
                p.kernel,
                p.stride,
                p.padding
            )))
        }
    };

    let (n, _, ih, iw) = x.dims();
    let in_per_group = p.in_channels / p.groups;
    let out_per_group = p.out_channels / p.groups;
    let k = p.kernel;

    let mut out = Tensor4::zeros(n, p.out_channels, oh, ow);
    let plane = oh * ow;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(chunk, out_plane)| {
            let b = chunk / p.out_channels;
            let oc = chunk % p.out_channels;
            let group = oc / out_per_group;
            let ic0 = group * in_per_group;
            let w_base = oc * in_per_group * k * k;
            let bias = p.bias.as_ref().map_or(0.0, |bs| bs[oc].as_f64());
            let xdata = x.data();
            for oy in 0..oh {
                let iy0 = (oy * p.stride) as isize - p.padding as isize;
                let ky_lo = (-iy0).max(0) as usize;
                let ky_hi = k.min((ih as isize - iy0).max(0) as usize);
                for ox in 0..ow {
                    let ix0 = (ox * p.stride) as isize - p.padding as isize;
                    let kx_lo = (-ix0).max(0) as usize;
                    let kx_hi = k.min((iw as isize - ix0).max(0) as usize);
                    let mut acc = bias;
                    for ic in 0..in_per_group {
                        let x_chan = ((b * x.channels() + ic0 + ic) * ih) as isize;
                        let w_chan = w_base + ic * k * k;
                        for ky in ky_lo..ky_hi {
                            let row = ((x_chan + iy0 + ky as isize) as usize) * iw;
                            let wrow = w_chan + ky * k;
                            for kx in kx_lo..kx_hi {
                                let xv = xdata[row + (ix0 + kx as isize) as usize].as_f64();
                                acc += p.weights[wrow + kx].as_f64() * xv;
                            }
                        }
                    }
                    out_plane[oy * ow + ox] = S::from_f64(acc);
                }
            }
        });
    Ok(out)
}

/// Inference batch norm: `y = scale·(x − mean)/sqrt(var + eps) + shift`
/// per channel.
pub fn batch_norm_infer<S: Scalar>(x: &Tensor4<S>, p: &BnParams<S>) -> Result<Tensor4<S>> {
    p.validate()?;
    if p.channels() != x.channels() {
        return Err(CoreError::shape(format!(
            "batch_norm: {} channels vs {} parameters",
            x.channels(),
            p.channels()
        )));
    }
    let (n, c, h, w) = x.dims();
    let mut out = x.clone();
    let plane = h * w;
    for b in 0..n {
        for ch in 0..c {
            let inv = (p.running_var[ch].as_f64() + p.eps).sqrt().recip();
            let scale = p.scale[ch].as_f64() * inv;
            let mean = p.running_mean[ch].as_f64();
            let shift = p.shift[ch].as_f64();
            let start = (b * c + ch) * plane;
            for v in &mut out.data_mut()[start..start + plane] {
                *v = S::from_f64((v.as_f64() - mean) * scale + shift);
            }
        }
    }
    Ok(out)
}

/// Elementwise logistic function 1/(1 + e^{−x}).
pub fn sigmoid<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    x.map(|v| S::from_f64(sigmoid_f64(v.as_f64())))
}

/// Elementwise x·sigmoid(x).
pub fn silu<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    x.map(|v| {
        let f = v.as_f64();
        S::from_f64(f * sigmoid_f64(f))
    })
}

#[inline]
pub fn sigmoid_f64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Windowed maximum with implicit −inf padding, so padded cells never win.
pub fn max_pool2d<S: Scalar>(
    x: &Tensor4<S>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<S>> {
    if kernel == 0 || stride == 0 {
        return Err(CoreError::invalid(
            "max_pool2d: kernel and stride must be >= 1",
        ));
    }
    if padding > kernel / 2 {
        return Err(CoreError::invalid(
            "max_pool2d: padding above kernel/2 would create empty windows",
        ));
    }
    let extent = |input: usize| -> Option<usize> {
        let padded = input + 2 * padding;
        (padded >= kernel).then(|| (padded - kernel) / stride + 1)
    };
    let (oh, ow) = match (extent(x.height()), extent(x.width())) {
        (Some(h), Some(w)) if h > 0 && w > 0 => (h, w),
        _ => return Err(CoreError::shape("max_pool2d: empty output")),
    };
    let (n, c, ih, iw) = x.dims();
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                let iy0 = (oy * stride) as isize - padding as isize;
                for ox in 0..ow {
                    let ix0 = (ox * stride) as isize - padding as isize;
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..kernel {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= ih as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= iw as isize {
                                continue;
                            }
                            best = best.max(x.get(b, ch, iy as usize, ix as usize).as_f64());
                        }
                    }
                    out.set(b, ch, oy, ox, S::from_f64(best));
                }
            }
        }
    }
    Ok(out)
}

/// Adaptive average pooling to `(out_h, out_w)`.
///
/// Window bounds follow `[floor(i·in/out), ceil((i+1)·in/out))`; for the
/// `(H,1)`, `(1,W)` and `(1,1)` targets this is exactly the arithmetic mean
/// along the collapsed axes.
pub fn adaptive_avg_pool<S: Scalar>(
    x: &Tensor4<S>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor4<S>> {
    if out_h == 0 || out_w == 0 {
        return Err(CoreError::invalid("adaptive_avg_pool: zero target dims"));
    }
    if out_h > x.height() || out_w > x.width() {
        return Err(CoreError::shape(format!(
            "adaptive_avg_pool: target {}x{} exceeds input {}x{}",
            out_h,
            out_w,
            x.height(),
            x.width()
        )));
    }
    let (n, c, ih, iw) = x.dims();
    let bound = |i: usize, outn: usize, inn: usize| -> (usize, usize) {
        (i * inn / outn, ((i + 1) * inn).div_ceil(outn))
    };
    let mut out = Tensor4::zeros(n, c, out_h, out_w);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..out_h {
                let (y0, y1) = bound(oy, out_h, ih);
                for ox in 0..out_w {
                    let (x0, x1) = bound(ox, out_w, iw);
                    let mut acc = 0.0f64;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            acc += x.get(b, ch, iy, ix).as_f64();
                        }
                    }
                    let count = ((y1 - y0) * (x1 - x0)) as f64;
                    out.set(b, ch, oy, ox, S::from_f64(acc / count));
                }
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour upsampling: every pixel replicated `factor`× per axis.
pub fn upsample_nearest<S: Scalar>(x: &Tensor4<S>, factor: usize) -> Result<Tensor4<S>> {
    if factor == 0 {
        return Err(CoreError::invalid("upsample factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let (n, c, h, w) = x.dims();
    let mut out = Tensor4::zeros(n, c, h * factor, w * factor);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..h * factor {
                for ox in 0..w * factor {
                    out.set(b, ch, oy, ox, x.get(b, ch, oy / factor, ox / factor));
                }
            }
        }
    }
    Ok(out)
}

/// Split along channels: `[0, first)` and `[first, channels)`.
pub fn channel_split<S: Scalar>(x: &Tensor4<S>, first: usize) -> Result<(Tensor4<S>, Tensor4<S>)> {
    if first == 0 || first >= x.channels() {
        return Err(CoreError::invalid(format!(
            "channel_split: split point {first} out of range for {} channels",
            x.channels()
        )));
    }
    let (n, c, h, w) = x.dims();
    let mut a = Tensor4::zeros(n, first, h, w);
    let mut b = Tensor4::zeros(n, c - first, h, w);
    let plane = h * w;
    for bi in 0..n {
        for ch in 0..c {
            let src = x.plane(bi, ch);
            let dst = if ch < first {
                let start = (bi * first + ch) * plane;
                &mut a.data_mut()[start..start + plane]
            } else {
                let start = (bi * (c - first) + (ch - first)) * plane;
                &mut b.data_mut()[start..start + plane]
            };
            dst.copy_from_slice(src);
        }
    }
    Ok((a, b))
}

/// Stack channels of the parts in argument order.
pub fn channel_concat<S: Scalar>(parts: &[&Tensor4<S>]) -> Result<Tensor4<S>> {
    let first = parts
        .first()
        .ok_or_else(|| CoreError::invalid("channel_concat: empty input list"))?;
    let (n, _, h, w) = first.dims();
    let mut c_total = 0;
    for p in parts {
        if p.batch() != n || p.height() != h || p.width() != w {
            return Err(CoreError::shape(format!(
                "channel_concat: {}x{}x{}x{} incompatible with {}x?x{}x{}",
                p.batch(),
                p.channels(),
                p.height(),
                p.width(),
                n,
                h,
                w
            )));
        }
        c_total += p.channels();
    }
    let mut out = Tensor4::zeros(n, c_total, h, w);
    let plane = h * w;
    for b in 0..n {
        let mut ch_off = 0;
        for p in parts {
            for ch in 0..p.channels() {
                let start = (b * c_total + ch_off + ch) * plane;
                out.data_mut()[start..start + plane].copy_from_slice(p.plane(b, ch));
            }
            ch_off += p.channels();
        }
    }
    Ok(out)
}

/// Index permutation applied by [`channel_shuffle`]: output position `p`
/// reads input channel `(p % groups)·(c/groups) + p/groups`.
pub fn shuffle_index_map(channels: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || channels % groups != 0 {
        return Err(CoreError::GroupMismatch { groups, channels });
    }
    let per = channels / groups;
    Ok((0..channels)
        .map(|p| (p % groups) * per + p / groups)
        .collect())
}

/// Parameter-free channel shuffle: reshape (groups, c/groups), transpose,
/// flatten.
pub fn channel_shuffle<S: Scalar>(x: &Tensor4<S>, groups: usize) -> Result<Tensor4<S>> {
    let map = shuffle_index_map(x.channels(), groups)?;
    let (n, c, h, w) = x.dims();
    let mut out = Tensor4::zeros(n, c, h, w);
    let plane = h * w;
    for b in 0..n {
        for (dst, &src) in map.iter().enumerate() {
            let start = (b * c + dst) * plane;
            out.data_mut()[start..start + plane].copy_from_slice(x.plane(b, src));
        }
    }
    Ok(out)
}

/// Central-difference gradient: `(f(x+eps·e_i) − f(x−eps·e_i)) / (2·eps)`.
///
/// Errors when any probe evaluates non-finite.
pub fn finite_diff_grad<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if eps <= 0.0 {
        return Err(CoreError::invalid("finite_diff_grad: eps must be > 0"));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let hi = f(&probe);
        probe[i] = x[i] - eps;
        let lo = f(&probe);
        probe[i] = x[i];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(CoreError::NonFinite(format!(
                "finite_diff_grad: f non-finite near coordinate {i}"
            )));
        }
        grad.push((hi - lo) / (2.0 * eps));
    }
    Ok(grad)
}

/// Default step for [`finite_diff_grad`] on unit-scale inputs.
pub const FD_DEFAULT_EPS: f64 = 1e-5;
